//! Fixtures shared by the criterion benches.

use pdte_core::he::{keygen, HeParams, KeyTriple, DEFAULT_INT_MODULUS};
use pdte_core::pdte_bin::{self, EncryptedInputBin, PackingMode};
use pdte_core::pdte_int::{self, EncryptedInputInt};
use pdte_core::tree::complete_tree;
use pdte_core::{AttributeVector, TreeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const SLOTS: usize = 16;
pub const LEVELS: u32 = 32;

/// A complete tree over four attributes plus one matching input vector.
pub fn fixture(depth: usize, bits: u32, seed: u64) -> (TreeModel, AttributeVector) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let model = complete_tree(depth, bits, 4, &mut rng);
    let x = AttributeVector::random(&mut rng, model.params());
    (model, x)
}

pub fn bin_setup(
    model: &TreeModel,
    x: &AttributeVector,
    packing: PackingMode,
) -> (KeyTriple, EncryptedInputBin) {
    let keys = keygen(&HeParams::binary(SLOTS, LEVELS)).expect("valid parameters");
    let xs = if packing == PackingMode::AttributePacking {
        vec![x.clone(); SLOTS]
    } else {
        vec![x.clone()]
    };
    let input =
        pdte_bin::encrypt_input(&keys.pk, &xs, model.params().bits, packing).expect("input fits");
    (keys, input)
}

/// Packed encodings span `next_pow2(bits + 1)` slots, so the slot count
/// grows with the bit length when `packed` is set.
pub fn int_setup(
    model: &TreeModel,
    x: &AttributeVector,
    packed: bool,
) -> (KeyTriple, EncryptedInputInt) {
    let width = (model.params().bits as usize + 1).next_power_of_two();
    let slots = if packed { SLOTS.max(width) } else { SLOTS };
    let keys =
        keygen(&HeParams::integer(DEFAULT_INT_MODULUS, slots, LEVELS)).expect("valid parameters");
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let input = pdte_int::encrypt_input(&keys.pk, x, model.params().bits, packed, &mut rng)
        .expect("input fits");
    (keys, input)
}
