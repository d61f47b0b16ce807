//! Backend-agnostic Boolean and arithmetic building blocks.
//!
//! Bit vectors are stored most significant bit first, matching the
//! `(x_mu, ..., x_1)` order in which inputs are encrypted.

use crate::bits::{bitlen, to_bits_msb};
use crate::error::{Error, Result};
use crate::he::{CtHandle, Evaluator, Mode};

/// Bitwise encryption of one integer, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCiphertextVector(Vec<CtHandle>);

impl BitCiphertextVector {
    pub fn new(bits: Vec<CtHandle>) -> Self {
        BitCiphertextVector(bits)
    }

    /// Transparent encryption of a public `width`-bit constant.
    pub fn trivial(ev: &dyn Evaluator, value: u64, width: usize) -> Result<Self> {
        let bits = to_bits_msb(value, width)
            .into_iter()
            .map(|b| ev.trivial(b))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(BitCiphertextVector(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[CtHandle] {
        &self.0
    }

    /// Bit `l` counted from the least significant end, 1-based.
    pub fn bit(&self, l: usize) -> &CtHandle {
        &self.0[self.0.len() - l]
    }

    pub fn into_inner(self) -> Vec<CtHandle> {
        self.0
    }

    pub fn max_depth(&self) -> u32 {
        self.0.iter().map(CtHandle::depth).max().unwrap_or(0)
    }
}

fn require_binary(ev: &dyn Evaluator, what: &str) -> Result<()> {
    if ev.params().mode != Mode::Binary {
        return Err(Error::Unsupported(format!(
            "{what} needs a binary (p = 2) context"
        )));
    }
    Ok(())
}

/// Size of the left part when splitting `n > 1` elements: `2^{|n-1|-1}`.
pub fn split_point(n: usize) -> usize {
    debug_assert!(n > 1);
    1 << (bitlen(n as u64 - 1) - 1)
}

/// Product of `arr[from..=to]` (1-based, inclusive) with logarithmic depth.
///
/// The left part always holds a power-of-two number of elements, so for
/// inputs of equal depth the result sits `|n| - 1` levels deeper when `n` is
/// a power of two and `|n|` levels deeper otherwise.
pub fn eval_mul(ev: &dyn Evaluator, from: usize, to: usize, arr: &[CtHandle]) -> Result<CtHandle> {
    if from == 0 || from > to || to > arr.len() {
        return Err(Error::Input(format!(
            "eval_mul range [{from}, {to}] is empty or outside 1..={}",
            arr.len()
        )));
    }
    Ok(product(ev, &arr[from - 1..to])?)
}

pub(crate) fn product(ev: &dyn Evaluator, arr: &[CtHandle]) -> crate::he::HeResult<CtHandle> {
    match arr.len() {
        0 => ev.trivial(1),
        1 => Ok(arr[0].clone()),
        n => {
            let mid = split_point(n);
            let left = product(ev, &arr[..mid])?;
            let right = product(ev, &arr[mid..])?;
            ev.mul(&left, &right)
        }
    }
}

#[derive(Default)]
struct Segment {
    gt: Option<CtHandle>,
    lt: Option<CtHandle>,
    eq: Option<CtHandle>,
}

#[derive(Clone, Copy)]
struct Want {
    gt: bool,
    lt: bool,
    eq: bool,
}

fn compare_segment(
    ev: &dyn Evaluator,
    x: &[CtHandle],
    y: &[CtHandle],
    want: Want,
) -> Result<Segment> {
    let mut out = Segment::default();
    if x.len() == 1 {
        let (a, b) = (&x[0], &y[0]);
        if want.gt || want.lt {
            let ab = ev.mul(a, b)?;
            if want.gt {
                out.gt = Some(ev.add(a, &ab)?);
            }
            if want.lt {
                out.lt = Some(ev.add(b, &ab)?);
            }
        }
        if want.eq {
            out.eq = Some(ev.not(&ev.add(a, b)?)?);
        }
        return Ok(out);
    }
    let mid = split_point(x.len());
    let hi = compare_segment(
        ev,
        &x[..mid],
        &y[..mid],
        Want {
            eq: want.eq || want.gt || want.lt,
            ..want
        },
    )?;
    let lo = compare_segment(ev, &x[mid..], &y[mid..], want)?;
    let eq_hi = hi.eq.as_ref();
    if want.gt {
        let carried = ev.mul(eq_hi.unwrap(), lo.gt.as_ref().unwrap())?;
        out.gt = Some(ev.add(hi.gt.as_ref().unwrap(), &carried)?);
    }
    if want.lt {
        let carried = ev.mul(eq_hi.unwrap(), lo.lt.as_ref().unwrap())?;
        out.lt = Some(ev.add(hi.lt.as_ref().unwrap(), &carried)?);
    }
    if want.eq {
        out.eq = Some(ev.mul(eq_hi.unwrap(), lo.eq.as_ref().unwrap())?);
    }
    Ok(out)
}

fn check_pair(ev: &dyn Evaluator, x: &BitCiphertextVector, y: &BitCiphertextVector) -> Result<()> {
    require_binary(ev, "bitwise comparison")?;
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Input(format!(
            "comparison operands have bit lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Encrypted comparison: returns `([x > y], [y > x])`, slot-wise.
///
/// Divide and conquer over the bits: `gt = gt_hi + eq_hi * gt_lo`,
/// `eq = eq_hi * eq_lo`, with per-bit `gt_i = x_i (1 + y_i)` and
/// `eq_i = 1 + x_i + y_i`. Depth is at most `|mu - 1| + 1`.
pub fn she_cmp(
    ev: &dyn Evaluator,
    x: &BitCiphertextVector,
    y: &BitCiphertextVector,
) -> Result<(CtHandle, CtHandle)> {
    check_pair(ev, x, y)?;
    ev.metrics().record_comparison();
    let seg = compare_segment(
        ev,
        x.bits(),
        y.bits(),
        Want {
            gt: true,
            lt: true,
            eq: false,
        },
    )?;
    Ok((seg.gt.unwrap(), seg.lt.unwrap()))
}

/// `[y > x]` alone; same circuit as [`she_cmp`] minus the `gt` chain.
pub fn she_lt(
    ev: &dyn Evaluator,
    x: &BitCiphertextVector,
    y: &BitCiphertextVector,
) -> Result<CtHandle> {
    check_pair(ev, x, y)?;
    ev.metrics().record_comparison();
    let seg = compare_segment(
        ev,
        x.bits(),
        y.bits(),
        Want {
            gt: false,
            lt: true,
            eq: false,
        },
    )?;
    Ok(seg.lt.unwrap())
}

/// `[x = y]` computed as `gt + lt + 1` from [`she_cmp`].
pub fn she_equal(
    ev: &dyn Evaluator,
    x: &BitCiphertextVector,
    y: &BitCiphertextVector,
) -> Result<CtHandle> {
    let (gt, lt) = she_cmp(ev, x, y)?;
    Ok(ev.not(&ev.add(&gt, &lt)?)?)
}

/// Binary population count of `bits`, `|n|` output bits, MSB first.
///
/// Carry-save reduction: each round compresses every column with full
/// adders (three bits) or half adders (two bits), lowest depth first, until
/// every column holds a single bit.
pub fn she_fadder(ev: &dyn Evaluator, bits: &[CtHandle]) -> Result<BitCiphertextVector> {
    require_binary(ev, "full adder")?;
    if bits.is_empty() {
        return Err(Error::Input(
            "full adder needs at least one input bit".into(),
        ));
    }
    let width = bitlen(bits.len() as u64) as usize;
    let mut columns: Vec<Vec<CtHandle>> = vec![bits.to_vec()];
    while columns.iter().any(|c| c.len() > 1) {
        let mut next: Vec<Vec<CtHandle>> = vec![Vec::new(); columns.len() + 1];
        for (w, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(CtHandle::depth);
            let mut rest = col.as_slice();
            while rest.len() >= 3 {
                let (a, b, c) = (&rest[0], &rest[1], &rest[2]);
                let t = ev.add(a, b)?;
                let sum = ev.add(&t, c)?;
                let carry = ev.add(&ev.mul(a, b)?, &ev.mul(c, &t)?)?;
                next[w].push(sum);
                next[w + 1].push(carry);
                rest = &rest[3..];
            }
            match rest {
                [a, b] => {
                    next[w].push(ev.add(a, b)?);
                    next[w + 1].push(ev.mul(a, b)?);
                }
                [a] => next[w].push(a.clone()),
                _ => {}
            }
        }
        while next.last().is_some_and(Vec::is_empty) {
            next.pop();
        }
        columns = next;
    }
    // Columns at or above `width` can only hold encryptions of zero.
    let mut out = Vec::with_capacity(width);
    for w in (0..width).rev() {
        match columns.get(w).and_then(|c| c.first()) {
            Some(bit) => out.push(bit.clone()),
            None => out.push(ev.trivial(0)?),
        }
    }
    Ok(BitCiphertextVector(out))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::bits::from_bits_msb;
    use crate::he::{keygen, Decryptor, Encryptor, HeParams, KeyTriple, SlotVector};

    fn keys() -> KeyTriple {
        keygen(&HeParams::binary(1, 64)).unwrap()
    }

    fn enc_bits(k: &KeyTriple, x: u64, width: usize) -> BitCiphertextVector {
        BitCiphertextVector::new(
            to_bits_msb(x, width)
                .into_iter()
                .map(|b| k.pk.encrypt(b).unwrap())
                .collect(),
        )
    }

    fn dec(k: &KeyTriple, c: &CtHandle) -> u64 {
        k.sk.decrypt(c).unwrap().get(0)
    }

    #[test]
    fn cmp_small_cases() {
        let k = keys();
        let (gt, lt) = she_cmp(&k.ek, &enc_bits(&k, 5, 3), &enc_bits(&k, 3, 3)).unwrap();
        assert_eq!((dec(&k, &gt), dec(&k, &lt)), (1, 0));
        let (gt, lt) = she_cmp(&k.ek, &enc_bits(&k, 4, 3), &enc_bits(&k, 4, 3)).unwrap();
        assert_eq!((dec(&k, &gt), dec(&k, &lt)), (0, 0));
    }

    #[test]
    fn cmp_exhaustive_four_bits() {
        let k = keys();
        let mut max_depth = 0;
        for x in 0..16 {
            for y in 0..16 {
                let (xb, yb) = (enc_bits(&k, x, 4), enc_bits(&k, y, 4));
                let (gt, lt) = she_cmp(&k.ek, &xb, &yb).unwrap();
                assert_eq!(dec(&k, &gt), u64::from(x > y), "{x} > {y}");
                assert_eq!(dec(&k, &lt), u64::from(y > x), "{y} > {x}");
                let (gt2, lt2) = she_cmp(&k.ek, &yb, &xb).unwrap();
                assert_eq!(dec(&k, &gt), dec(&k, &lt2));
                assert_eq!(dec(&k, &lt), dec(&k, &gt2));
                assert_eq!(dec(&k, &she_lt(&k.ek, &xb, &yb).unwrap()), u64::from(y > x));
                max_depth = max_depth.max(gt.depth()).max(lt.depth());
            }
        }
        assert!(max_depth <= bitlen(3) + 1);
    }

    #[test]
    fn cmp_depth_bound_all_widths() {
        let k = keys();
        for mu in 1..=40usize {
            let (gt, lt) = she_cmp(&k.ek, &enc_bits(&k, 0, mu), &enc_bits(&k, 1, mu)).unwrap();
            let bound = bitlen(mu as u64 - 1) + 1;
            assert!(gt.depth() <= bound && lt.depth() <= bound, "mu={mu}");
        }
    }

    #[test]
    fn cmp_mult_count_within_four_mu_log_mu() {
        let k = keys();
        for mu in 1..=32usize {
            let ev = k.ek.metered();
            she_cmp(&ev, &enc_bits(&k, 0, mu), &enc_bits(&k, 1, mu)).unwrap();
            let mults = ev.metrics().snapshot().mul;
            assert!(
                mults <= 4 * mu as u64 * u64::from(bitlen(mu as u64)),
                "mu={mu}: {mults}"
            );
        }
    }

    #[test]
    fn cmp_rejects_length_mismatch() {
        let k = keys();
        assert!(matches!(
            she_cmp(&k.ek, &enc_bits(&k, 1, 3), &enc_bits(&k, 1, 4)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn cmp_is_slotwise() {
        let k = keygen(&HeParams::binary(16, 32)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let xs: Vec<u64> = (0..16).map(|_| rng.gen_range(0..256)).collect();
        let y = 97;
        let xb = BitCiphertextVector::new(
            (0..8)
                .rev()
                .map(|i| {
                    let slots = xs.iter().map(|x| (x >> i) & 1).collect();
                    k.pk.encrypt_packed(&SlotVector::new(slots)).unwrap()
                })
                .collect(),
        );
        let yb = enc_bits(&k, y, 8);
        let (gt, lt) = she_cmp(&k.ek, &xb, &yb).unwrap();
        let (gt, lt) = (k.sk.decrypt(&gt).unwrap(), k.sk.decrypt(&lt).unwrap());
        for (slot, x) in xs.iter().enumerate() {
            assert_eq!(gt[slot], u64::from(*x > y));
            assert_eq!(lt[slot], u64::from(y > *x));
        }
    }

    #[test]
    fn eval_mul_examples() {
        let k = keys();
        let ones: Vec<_> = (0..4).map(|_| k.pk.encrypt(1).unwrap()).collect();
        let single = eval_mul(&k.ek, 1, 1, &ones).unwrap();
        assert_eq!(single, ones[0]);
        let four = eval_mul(&k.ek, 1, 4, &ones).unwrap();
        assert_eq!((dec(&k, &four), four.depth()), (1, 2));
        let five: Vec<_> = [1, 1, 0, 1, 1]
            .iter()
            .map(|&b| k.pk.encrypt(b).unwrap())
            .collect();
        let r = eval_mul(&k.ek, 1, 5, &five).unwrap();
        assert_eq!((dec(&k, &r), r.depth()), (0, 3));
        assert!(eval_mul(&k.ek, 3, 2, &five).is_err());
        assert!(eval_mul(&k.ek, 0, 2, &five).is_err());
        assert!(eval_mul(&k.ek, 1, 6, &five).is_err());
    }

    #[test]
    fn eval_mul_subrange() {
        let k = keygen(&HeParams::integer(crate::he::DEFAULT_INT_MODULUS, 1, 16)).unwrap();
        let arr: Vec<_> = (1..=6).map(|v| k.pk.encrypt(v).unwrap()).collect();
        assert_eq!(dec(&k, &eval_mul(&k.ek, 2, 4, &arr).unwrap()), 2 * 3 * 4);
        assert_eq!(dec(&k, &eval_mul(&k.ek, 1, 6, &arr).unwrap()), 720);
    }

    #[test]
    fn fadder_examples() {
        let k = keys();
        let ones: Vec<_> = (0..3).map(|_| k.pk.encrypt(1).unwrap()).collect();
        let r = she_fadder(&k.ek, &ones).unwrap();
        assert_eq!(r.len(), 2);
        let got: Vec<u64> = r.bits().iter().map(|c| dec(&k, c)).collect();
        assert_eq!(got, vec![1, 1]);
        let zeros: Vec<_> = (0..8).map(|_| k.pk.encrypt(0).unwrap()).collect();
        let r = she_fadder(&k.ek, &zeros).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.bits().iter().all(|c| dec(&k, c) == 0));
        assert!(she_fadder(&k.ek, &[]).is_err());
    }

    #[test]
    fn fadder_counts_random_vectors() {
        let k = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for n in 1..=20usize {
            for _ in 0..10 {
                let bits: Vec<u64> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let cts: Vec<_> = bits.iter().map(|&b| k.pk.encrypt(b).unwrap()).collect();
                let r = she_fadder(&k.ek, &cts).unwrap();
                let got = from_bits_msb(&r.bits().iter().map(|c| dec(&k, c)).collect::<Vec<_>>());
                assert_eq!(got, bits.iter().sum::<u64>());
            }
        }
    }

    #[test]
    fn equality_examples() {
        let k = keys();
        let eq = she_equal(&k.ek, &enc_bits(&k, 6, 3), &enc_bits(&k, 6, 3)).unwrap();
        assert_eq!(dec(&k, &eq), 1);
        let ne = she_equal(&k.ek, &enc_bits(&k, 6, 3), &enc_bits(&k, 5, 3)).unwrap();
        assert_eq!(dec(&k, &ne), 0);
        for x in 0..16 {
            for y in 0..16 {
                let e = she_equal(&k.ek, &enc_bits(&k, x, 4), &enc_bits(&k, y, 4)).unwrap();
                assert_eq!(dec(&k, &e), u64::from(x == y));
            }
        }
    }

    #[test]
    fn integer_context_is_rejected() {
        let k = keygen(&HeParams::integer(crate::he::DEFAULT_INT_MODULUS, 1, 8)).unwrap();
        let x = BitCiphertextVector::new(vec![k.pk.encrypt(1).unwrap()]);
        assert!(matches!(she_cmp(&k.ek, &x, &x), Err(Error::Unsupported(_))));
    }
}
