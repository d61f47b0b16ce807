//! The homomorphic backend contract.
//!
//! Engines only talk to ciphertexts through [`Evaluator`] (server side),
//! [`Encryptor`] (anyone holding the public key) and [`Decryptor`] (the
//! client). A [`CtHandle`] carries a backend-opaque payload plus the depth
//! metadata every leveled scheme exposes: a fresh encryption has depth 0,
//! additions keep the maximum input depth, multiplications add one, and a
//! ciphertext whose depth exceeds the level budget `L` can no longer be
//! decrypted.
//!
//! [`clear`] is the reference backend. It stores plaintext slots and performs
//! no cryptography, so circuits can be checked slot by slot against plaintext
//! oracles while the depth counter stays exact.

pub mod clear;
mod wire;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clear::{keygen, ClearContext, EvaluationKey, KeyTriple, PublicKey, SecretKey};
pub use wire::CT_HEADER_LEN;

/// Largest plaintext modulus accepted in integer mode. Keeps slot sums in a `u64`.
pub const MAX_MODULUS: u64 = 1 << 62;

/// The prime `2^40 + 15`, default plaintext modulus in integer mode.
pub const DEFAULT_INT_MODULUS: u64 = 1_099_511_627_791;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("plaintext value {value} is not below the modulus {modulus}")]
    ValueOutOfRange { value: u64, modulus: u64 },
    #[error("slot vector has {got} slots, context has {expected}")]
    SlotCount { got: usize, expected: usize },
    #[error("ciphertexts belong to different contexts")]
    ContextMismatch,
    #[error("capacity exhausted: depth {depth} exceeds level budget {levels}")]
    CapacityExhausted { depth: u32, levels: u32 },
    #[error("shift offset {offset} exceeds slot count {slots}")]
    ShiftOutOfRange { offset: usize, slots: usize },
    #[error("malformed ciphertext: {0}")]
    Malformed(String),
}

pub type HeResult<T> = std::result::Result<T, HeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Binary,
    Integer,
}

/// Scheme parameters: plaintext modulus `p`, slot count `s`, level budget `L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeParams {
    pub mode: Mode,
    pub modulus: u64,
    pub slots: usize,
    pub levels: u32,
    pub seed: u64,
}

impl HeParams {
    pub fn binary(slots: usize, levels: u32) -> Self {
        HeParams {
            mode: Mode::Binary,
            modulus: 2,
            slots,
            levels,
            seed: 0,
        }
    }

    pub fn integer(modulus: u64, slots: usize, levels: u32) -> Self {
        HeParams {
            mode: Mode::Integer,
            modulus,
            slots,
            levels,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> HeResult<()> {
        if self.slots == 0 {
            return Err(HeError::InvalidParams(
                "slot count must be at least 1".into(),
            ));
        }
        if self.levels == 0 {
            return Err(HeError::InvalidParams(
                "level budget must be at least 1".into(),
            ));
        }
        match self.mode {
            Mode::Binary if self.modulus != 2 => Err(HeError::InvalidParams(format!(
                "binary mode requires modulus 2, got {}",
                self.modulus
            ))),
            Mode::Integer if self.modulus < 3 || self.modulus > MAX_MODULUS => {
                Err(HeError::InvalidParams(format!(
                    "integer modulus must lie in [3, 2^62], got {}",
                    self.modulus
                )))
            }
            _ => Ok(()),
        }
    }

    /// Deterministic RNG stream derived from the context seed.
    pub fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Identifies the key context a ciphertext was produced under.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ContextId(pub [u8; 16]);

impl fmt::Debug for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContextId({})", self.to_hex())
    }
}

impl ContextId {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 32 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 16];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(ContextId(out))
    }
}

/// Plaintext view of a packed ciphertext: `s` ring elements mod `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotVector(Vec<u64>);

impl SlotVector {
    pub fn new(slots: Vec<u64>) -> Self {
        SlotVector(slots)
    }

    pub fn replicate(value: u64, slots: usize) -> Self {
        SlotVector(vec![value; slots])
    }

    /// `values` in the leading slots, zero elsewhere.
    pub fn padded(values: &[u64], slots: usize) -> Self {
        let mut v = vec![0; slots];
        v[..values.len()].copy_from_slice(values);
        SlotVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.0
    }

    pub fn get(&self, slot: usize) -> u64 {
        self.0[slot]
    }
}

impl std::ops::Index<usize> for SlotVector {
    type Output = u64;
    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

/// An encrypted (or simulated) slot vector with its level metadata.
///
/// Handles are immutable values; every operation returns a new handle.
#[derive(Clone, PartialEq, Eq)]
pub struct CtHandle {
    context: ContextId,
    depth: u32,
    capacity: i64,
    payload: Arc<[u64]>,
}

impl fmt::Debug for CtHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CtHandle")
            .field("context", &self.context)
            .field("depth", &self.depth)
            .field("capacity", &self.capacity)
            .field("words", &self.payload.len())
            .finish()
    }
}

impl CtHandle {
    /// Assemble a handle. Meant for backend implementations.
    pub fn from_parts(context: ContextId, depth: u32, levels: u32, payload: Arc<[u64]>) -> Self {
        CtHandle {
            context,
            depth,
            capacity: i64::from(levels) - i64::from(depth),
            payload,
        }
    }

    pub fn context(&self) -> ContextId {
        self.context
    }

    /// Multiplicative depth consumed so far.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Remaining levels; negative once the budget is overdrawn.
    pub fn capacity(&self) -> i64 {
        self.capacity
    }

    /// Backend-opaque payload words.
    pub fn payload(&self) -> &[u64] {
        &self.payload
    }
}

/// Exact operation counters shared by clones of one evaluation key.
#[derive(Debug, Default)]
pub struct Metrics {
    mul: AtomicU64,
    add: AtomicU64,
    shift: AtomicU64,
    comparison: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub mul: u64,
    pub add: u64,
    pub shift: u64,
    pub comparison: u64,
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            mul: self.mul - rhs.mul,
            add: self.add - rhs.add,
            shift: self.shift - rhs.shift,
            comparison: self.comparison - rhs.comparison,
        }
    }
}

impl Metrics {
    pub fn record_mul(&self) {
        self.mul.fetch_add(1, Ordering::Relaxed);
    }
    pub fn record_add(&self) {
        self.add.fetch_add(1, Ordering::Relaxed);
    }
    pub fn record_shift(&self) {
        self.shift.fetch_add(1, Ordering::Relaxed);
    }
    pub fn record_comparison(&self) {
        self.comparison.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            mul: self.mul.load(Ordering::Relaxed),
            add: self.add.load(Ordering::Relaxed),
            shift: self.shift.load(Ordering::Relaxed),
            comparison: self.comparison.load(Ordering::Relaxed),
        }
    }
}

/// Server-side ciphertext algebra. Holds no secret key material.
pub trait Evaluator: Send + Sync {
    fn params(&self) -> &HeParams;
    fn context_id(&self) -> ContextId;
    fn metrics(&self) -> &Metrics;

    /// Slot-wise sum mod `p`.
    fn add(&self, a: &CtHandle, b: &CtHandle) -> HeResult<CtHandle>;
    /// Slot-wise difference mod `p`.
    fn sub(&self, a: &CtHandle, b: &CtHandle) -> HeResult<CtHandle>;
    /// Slot-wise product mod `p`; consumes one level.
    fn mul(&self, a: &CtHandle, b: &CtHandle) -> HeResult<CtHandle>;
    /// Product with a public scalar; keeps the level of `c`.
    fn mul_scalar(&self, c: &CtHandle, scalar: u64) -> HeResult<CtHandle>;
    /// Moves slot `i + offset` to slot `i`, zero-filling the tail.
    fn shift_left(&self, c: &CtHandle, offset: usize) -> HeResult<CtHandle>;
    /// Moves slot `i` to slot `i + offset`, zero-filling the head.
    fn shift_right(&self, c: &CtHandle, offset: usize) -> HeResult<CtHandle>;
    /// Transparent encryption of a public constant, replicated to all slots.
    fn trivial(&self, value: u64) -> HeResult<CtHandle>;
    /// Transparent encryption of a public slot vector.
    fn trivial_packed(&self, slots: &SlotVector) -> HeResult<CtHandle>;
    /// Public well-formedness and capacity test for untrusted ciphertexts.
    fn capacity_check(&self, c: &CtHandle) -> bool;

    fn slots(&self) -> usize {
        self.params().slots
    }

    /// `1 - c` in binary mode, i.e. logical negation.
    fn not(&self, c: &CtHandle) -> HeResult<CtHandle> {
        let one = self.trivial(1)?;
        self.sub(&one, c)
    }
}

/// Encryption under the client's public key.
pub trait Encryptor: Send + Sync {
    fn params(&self) -> &HeParams;
    /// Encrypts `value` replicated to every slot.
    fn encrypt(&self, value: u64) -> HeResult<CtHandle>;
    fn encrypt_packed(&self, slots: &SlotVector) -> HeResult<CtHandle>;
}

/// Decryption; only the client holds an implementation.
pub trait Decryptor {
    fn decrypt(&self, c: &CtHandle) -> HeResult<SlotVector>;
}
