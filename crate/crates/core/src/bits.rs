//! Bit-level helpers shared by the circuits and the cost formulas.

/// Bitlength `|n| = floor(log2 n) + 1`, with `|0| = 0`.
pub fn bitlen(n: u64) -> u32 {
    u64::BITS - n.leading_zeros()
}

/// Width in bits of a label drawn from `[0, k-1]`; never less than one.
pub fn label_width(k: u64) -> usize {
    bitlen(k.saturating_sub(1)).max(1) as usize
}

/// Bits of `x` most significant first, `width` entries.
pub fn to_bits_msb(x: u64, width: usize) -> Vec<u64> {
    (0..width).rev().map(|i| (x >> i) & 1).collect()
}

/// Inverse of [`to_bits_msb`]; each entry is reduced mod 2.
pub fn from_bits_msb(bits: &[u64]) -> u64 {
    bits.iter().fold(0, |acc, b| (acc << 1) | (b & 1))
}

pub fn is_power_of_two(n: u64) -> bool {
    n != 0 && n & (n - 1) == 0
}
