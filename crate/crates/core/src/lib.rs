//! One-round private decision tree evaluation.
//!
//! A client encrypts its attribute vector under its own key, the server
//! evaluates its decision tree homomorphically and returns only encrypted
//! results. Two instantiations are provided:
//!
//! * [`pdte_bin`]: bitwise encryption, Boolean comparison circuit,
//!   logarithmic-depth path aggregation and three SIMD packing modes.
//! * [`pdte_int`]: 0/1-encodings with a modified Lin-Tzeng comparison,
//!   additive path costs and masked per-leaf results.
//!
//! Every engine runs against the [`he::Evaluator`] contract. The bundled
//! [`he::clear`] backend computes in the clear while tracking multiplicative
//! depth and operation counts, which makes the depth and cost claims of the
//! protocol testable against the plaintext classifier in [`tree`].

pub mod bits;
pub mod circuits;
pub mod cost;
pub mod error;
pub mod forest;
pub mod he;
pub mod pdte_bin;
pub mod pdte_int;
pub mod protocol;
pub mod tree;

pub use error::{Error, Result};
pub use he::{CtHandle, Evaluator, HeParams, KeyTriple, Mode, SlotVector};
pub use tree::{AttributeVector, TreeModel, TreeParams};
