//! Arithmetic instantiation over a large prime modulus.
//!
//! Attribute values and thresholds are turned into 0- and 1-encodings. A
//! difference vector `V_a^1 - V_b^0` has exactly one zero component iff
//! `a > b`, so the product of its components is a mark that is zero on the
//! taken branch. Path costs are plain sums of marks; the leaf whose cost is
//! zero is the classification leaf. Results are masked as
//! `cost * r + label` and shuffled, so only that leaf reveals its label.
//!
//! Ties are removed before comparing: the client encodes `2x + 1`, the
//! server `2y`, which turns `x >= y` into the strict `x' > y'`.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::bits::bitlen;
use crate::circuits::eval_mul;
use crate::error::{Error, Result};
use crate::he::{CtHandle, Encryptor, Evaluator, Mode, SlotVector};
use crate::tree::{AttributeVector, NodeId, NodeKind, TreeModel};

/// 0- and 1-encoding of a `mu`-bit value, MSB position first
/// (index 0 is position `mu`, index `mu - 1` is position 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding01 {
    pub v0: Vec<u64>,
    pub v1: Vec<u64>,
    pub mu: u32,
}

/// Smallest plaintext modulus that keeps encodings of width `mu` intact.
pub fn min_modulus(mu: u32) -> u128 {
    1u128 << (mu + 1)
}

pub fn encode01<R: Rng + ?Sized>(x: u64, mu: u32, rng: &mut R) -> Result<Encoding01> {
    if mu == 0 || mu > 61 {
        return Err(Error::Input(format!("encoding width {mu} outside 1..=61")));
    }
    if x >> mu != 0 {
        return Err(Error::Input(format!("{x} does not fit in {mu} bits")));
    }
    let base = 1u64 << mu;
    let half = 1u64 << (mu - 1);
    let mut v0 = Vec::with_capacity(mu as usize);
    let mut v1 = Vec::with_capacity(mu as usize);
    for l in (1..=mu).rev() {
        if (x >> (l - 1)) & 1 == 1 {
            v1.push(x >> (l - 1));
            v0.push(base + 2 * rng.gen_range(0..half));
        } else {
            v1.push(base + 2 * rng.gen_range(0..half) + 1);
            v0.push(((x >> l) << 1) | 1);
        }
    }
    Ok(Encoding01 { v0, v1, mu })
}

/// Client-side value after tie removal.
pub fn distinctify_client(x: u64) -> u64 {
    (x << 1) | 1
}

/// Server-side threshold after tie removal.
pub fn distinctify_server(y: u64) -> u64 {
    y << 1
}

/// Extends client values and server thresholds by one bit so that no pair
/// is equal and `[x' > y'] = [x >= y]`.
pub fn distinctify(xs: &[u64], ys: &[u64]) -> (Vec<u64>, Vec<u64>) {
    (
        xs.iter().copied().map(distinctify_client).collect(),
        ys.iter().copied().map(distinctify_server).collect(),
    )
}

/// Encrypted encodings of one attribute (or threshold). With packed
/// encodings each vector holds a single ciphertext whose first `mu` slots
/// carry the components.
#[derive(Debug, Clone)]
pub struct EncryptedEncoding {
    pub v0: Vec<CtHandle>,
    pub v1: Vec<CtHandle>,
}

#[derive(Debug, Clone)]
pub struct EncryptedInputInt {
    /// Bit length of the raw attribute values.
    pub bits: u32,
    pub packed_encodings: bool,
    pub attributes: Vec<EncryptedEncoding>,
}

impl EncryptedInputInt {
    pub fn ciphertexts(&self) -> impl Iterator<Item = &CtHandle> + '_ {
        self.attributes
            .iter()
            .flat_map(|a| a.v0.iter().chain(&a.v1))
    }
}

fn check_context(params: &crate::he::HeParams, width: u32, packed: bool) -> Result<()> {
    if params.mode != Mode::Integer {
        return Err(Error::Unsupported(
            "integer comparison needs an integer context".into(),
        ));
    }
    if (params.modulus as u128) <= min_modulus(width) {
        return Err(Error::Unsupported(format!(
            "modulus {} too small for {width}-bit encodings",
            params.modulus
        )));
    }
    if packed && params.slots < (width as usize).next_power_of_two() {
        return Err(Error::Unsupported(format!(
            "packed encodings of width {width} need at least {} slots",
            (width as usize).next_power_of_two()
        )));
    }
    Ok(())
}

fn encrypt_encoding(
    enc: &dyn Encryptor,
    e: &Encoding01,
    packed: bool,
) -> Result<EncryptedEncoding> {
    let s = enc.params().slots;
    let vec = |v: &[u64]| -> Result<Vec<CtHandle>> {
        if packed {
            Ok(vec![enc.encrypt_packed(&SlotVector::padded(v, s))?])
        } else {
            Ok(v.iter()
                .map(|&c| enc.encrypt(c))
                .collect::<std::result::Result<_, _>>()?)
        }
    };
    Ok(EncryptedEncoding {
        v0: vec(&e.v0)?,
        v1: vec(&e.v1)?,
    })
}

/// Client step: distinctify, encode and encrypt every attribute.
pub fn encrypt_input<R: Rng + ?Sized>(
    enc: &dyn Encryptor,
    x: &AttributeVector,
    bits: u32,
    packed_encodings: bool,
    rng: &mut R,
) -> Result<EncryptedInputInt> {
    let width = bits + 1;
    check_context(enc.params(), width, packed_encodings)?;
    let attributes = x
        .values()
        .iter()
        .map(|&v| {
            if v >> bits != 0 {
                return Err(Error::Input(format!(
                    "attribute value {v} does not fit in {bits} bits"
                )));
            }
            let e = encode01(distinctify_client(v), width, rng)?;
            encrypt_encoding(enc, &e, packed_encodings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncryptedInputInt {
        bits,
        packed_encodings,
        attributes,
    })
}

/// Standalone comparison: `π(c_mu, ..., c_1)` with `c_l = (u_l - v_l) r_l`.
/// Exactly one output decrypts to 0 iff the value behind `u` is larger.
pub fn lin_compare<R: Rng + ?Sized>(
    ev: &dyn Evaluator,
    u: &[CtHandle],
    v: &[CtHandle],
    rng: &mut R,
) -> Result<Vec<CtHandle>> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Input(format!(
            "encoding lengths {} and {} differ",
            u.len(),
            v.len()
        )));
    }
    check_context(ev.params(), u.len() as u32, false)?;
    let p = ev.params().modulus;
    let mut out = u
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let r = rng.gen_range(1..p);
            Ok(ev.mul(&ev.sub(a, b)?, &ev.trivial(r)?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    out.shuffle(rng);
    ev.metrics().record_comparison();
    Ok(out)
}

/// Comparison mark for tree evaluation: the product of all differences,
/// zero iff the value behind `u` is larger.
pub fn lin_compare_dt(ev: &dyn Evaluator, u: &[CtHandle], v: &[CtHandle]) -> Result<CtHandle> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Input(format!(
            "encoding lengths {} and {} differ",
            u.len(),
            v.len()
        )));
    }
    let diffs = u
        .iter()
        .zip(v)
        .map(|(a, b)| ev.sub(a, b))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    ev.metrics().record_comparison();
    eval_mul(ev, 1, diffs.len(), &diffs)
}

/// Packed variant of [`lin_compare_dt`]: the mark lands in slot 0.
///
/// Slots past `width` are set to 1 so they do not disturb the product,
/// which is then folded with `⌈log2 width⌉` shift-and-multiply steps.
pub fn lin_compare_dt_packed(
    ev: &dyn Evaluator,
    u: &CtHandle,
    v: &CtHandle,
    width: usize,
) -> Result<CtHandle> {
    let s = ev.slots();
    let span = width.next_power_of_two();
    if span > s {
        return Err(Error::Unsupported(format!(
            "{width} components need {span} slots, have {s}"
        )));
    }
    let mut pad = vec![0u64; s];
    pad[width..].fill(1);
    let mut d = ev.add(&ev.sub(u, v)?, &ev.trivial_packed(&SlotVector::new(pad))?)?;
    let mut step = 1;
    while step < span {
        d = ev.mul(&d, &ev.shift_left(&d, step)?)?;
        step <<= 1;
    }
    ev.metrics().record_comparison();
    Ok(d)
}

fn compare_dt(
    ev: &dyn Evaluator,
    u: &[CtHandle],
    v: &[CtHandle],
    packed: bool,
    width: usize,
) -> Result<CtHandle> {
    if packed {
        match (u, v) {
            ([a], [b]) => lin_compare_dt_packed(ev, a, b, width),
            _ => Err(Error::Input(
                "packed encodings must be single ciphertexts".into(),
            )),
        }
    } else {
        lin_compare_dt(ev, u, v)
    }
}

/// Computes every node's cost: the sum of the marks on its root path.
/// Returns the leaf costs in node-id order.
pub fn arithmetic_pdte<R: Rng + ?Sized>(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    model: &TreeModel,
    input: &EncryptedInputInt,
    rng: &mut R,
) -> Result<Vec<(NodeId, CtHandle)>> {
    let p = model.params();
    if input.attributes.len() != p.attributes {
        return Err(Error::Input(format!(
            "input carries {} attributes, model expects {}",
            input.attributes.len(),
            p.attributes
        )));
    }
    if input.bits != p.bits {
        return Err(Error::Input(format!(
            "input uses {} bits, model {}",
            input.bits, p.bits
        )));
    }
    let width = p.bits + 1;
    check_context(ev.params(), width, input.packed_encodings)?;
    let expected = if input.packed_encodings {
        1
    } else {
        width as usize
    };
    if input
        .attributes
        .iter()
        .any(|a| a.v0.len() != expected || a.v1.len() != expected)
    {
        return Err(Error::Input(format!(
            "every encoding must carry {expected} ciphertexts"
        )));
    }

    // Threshold encodings draw from `rng`, so they are built sequentially.
    let decisions: Vec<(NodeId, usize, NodeId, NodeId, EncryptedEncoding)> = model
        .decision_nodes()
        .map(|n| {
            let NodeKind::Decision {
                attr,
                thr,
                left,
                right,
            } = n.kind
            else {
                unreachable!()
            };
            let e = encode01(distinctify_server(thr), width, rng)?;
            Ok((
                n.id,
                attr,
                left,
                right,
                encrypt_encoding(enc, &e, input.packed_encodings)?,
            ))
        })
        .collect::<Result<_>>()?;

    // Marks are scaled by fresh nonzero scalars so that nonzero marks on
    // one path cannot cancel in the cost sum.
    let modulus = ev.params().modulus;
    let scales: Vec<[u64; 2]> = decisions
        .iter()
        .map(|_| [rng.gen_range(1..modulus), rng.gen_range(1..modulus)])
        .collect();
    let edges = decisions
        .par_iter()
        .zip(&scales)
        .map(|((_, attr, left, right, y), [sl, sr])| {
            let x = &input.attributes[*attr];
            let w = width as usize;
            let right_mark = compare_dt(ev, &x.v1, &y.v0, input.packed_encodings, w)?;
            let left_mark = compare_dt(ev, &y.v1, &x.v0, input.packed_encodings, w)?;
            Ok([
                (*left, ev.mul_scalar(&left_mark, *sl)?),
                (*right, ev.mul_scalar(&right_mark, *sr)?),
            ])
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cost: Vec<Option<CtHandle>> = vec![None; p.nodes];
    for (id, m) in edges.into_iter().flatten() {
        cost[id] = Some(m);
    }
    for level in model.levels().iter().skip(2) {
        for &v in level {
            let parent = model.node(v).parent.expect("non-root node");
            let sum = ev.add(cost[v].as_ref().unwrap(), cost[parent].as_ref().unwrap())?;
            cost[v] = Some(sum);
        }
    }
    Ok(model
        .leaves()
        .map(|n| (n.id, cost[n.id].take().unwrap()))
        .collect())
}

/// Masks every leaf cost as `cost * r + label` with fresh nonzero `r` and
/// shuffles the results.
///
/// With `packed_results` the masked values are shifted into consecutive
/// slots, `⌈|L| / s⌉` ciphertexts in total; unused slots of the last one
/// are filled with random values outside the label domain.
/// Leaf indices with their masks for one output ciphertext, plus filler.
type ResultGroup = (Vec<(usize, u64)>, Vec<u64>);

pub fn finalize_int<R: Rng + ?Sized>(
    ev: &dyn Evaluator,
    model: &TreeModel,
    costs: &[(NodeId, CtHandle)],
    packed_results: bool,
    rng: &mut R,
) -> Result<Vec<CtHandle>> {
    let p = ev.params().modulus;
    let s = ev.slots();
    let mut order: Vec<(usize, u64)> = (0..costs.len()).map(|i| (i, rng.gen_range(1..p))).collect();
    order.shuffle(rng);
    let label = |i: usize| model.label(costs[i].0).expect("costs belong to leaves");

    if !packed_results {
        return order
            .par_iter()
            .map(|&(i, r)| {
                let masked = ev.mul(&costs[i].1, &ev.trivial(r)?)?;
                Ok(ev.add(&masked, &ev.trivial(label(i))?)?)
            })
            .collect();
    }

    let k = model.params().labels;
    let groups: Vec<ResultGroup> = order
        .chunks(s)
        .map(|chunk| {
            let filler = (chunk.len()..s).map(|_| rng.gen_range(k..p)).collect();
            (chunk.to_vec(), filler)
        })
        .collect();
    groups
        .par_iter()
        .map(|(chunk, filler)| {
            let mut acc: Option<CtHandle> = None;
            for (slot, &(i, r)) in chunk.iter().enumerate() {
                let masked = ev.mul(
                    &costs[i].1,
                    &ev.trivial_packed(&SlotVector::padded(&[r], s))?,
                )?;
                let term = ev.add(
                    &masked,
                    &ev.trivial_packed(&SlotVector::padded(&[label(i)], s))?,
                )?;
                let term = if slot == 0 {
                    term
                } else {
                    ev.shift_right(&term, slot)?
                };
                acc = Some(match acc {
                    None => term,
                    Some(a) => ev.add(&a, &term)?,
                });
            }
            let mut pad = vec![0u64; chunk.len()];
            pad.extend_from_slice(filler);
            Ok(ev.add(
                &acc.expect("chunks are non-empty"),
                &ev.trivial_packed(&SlotVector::new(pad))?,
            )?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntConfig {
    pub packed_results: bool,
}

#[derive(Debug, Clone)]
pub struct IntOutcome {
    pub outputs: Vec<CtHandle>,
    /// Leaf costs before masking, node-id order.
    pub costs: Vec<(NodeId, CtHandle)>,
}

pub fn pdte_int_run<R: Rng + ?Sized>(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    model: &TreeModel,
    input: &EncryptedInputInt,
    config: IntConfig,
    rng: &mut R,
) -> Result<IntOutcome> {
    if let Some(pos) = input.ciphertexts().position(|c| !ev.capacity_check(c)) {
        return Err(Error::Protocol(format!(
            "input ciphertext {pos} failed the capacity check"
        )));
    }
    let costs = arithmetic_pdte(ev, enc, model, input, rng)?;
    let outputs = finalize_int(ev, model, &costs, config.packed_results, rng)?;
    Ok(IntOutcome { outputs, costs })
}

/// Picks the unique value inside the label domain `[0, k)`.
pub fn client_decode_int(values: &[u64], k: u64) -> Result<u64> {
    let mut hits = values.iter().copied().filter(|&v| v < k);
    match (hits.next(), hits.clone().count()) {
        (Some(label), 0) => Ok(label),
        (None, _) => Err(Error::Ambiguous { candidates: 0 }),
        (Some(_), more) => Err(Error::Ambiguous {
            candidates: more + 1,
        }),
    }
}

/// Decrypted values the client scans: slot 0 of each result, or every slot
/// when results are packed.
pub fn result_values(
    dec: &dyn crate::he::Decryptor,
    outputs: &[CtHandle],
    packed_results: bool,
) -> Result<Vec<u64>> {
    let mut values = Vec::new();
    for c in outputs {
        let sv = dec.decrypt(c)?;
        if packed_results {
            values.extend_from_slice(sv.as_slice());
        } else {
            values.push(sv.get(0));
        }
    }
    Ok(values)
}

/// Multiplicative depth of one comparison mark on `width`-bit encodings.
pub fn mark_depth(width: u32) -> u32 {
    bitlen(width.saturating_sub(1) as u64)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::he::{keygen, Decryptor, HeParams, KeyTriple, DEFAULT_INT_MODULUS};
    use crate::tree::{complete_tree, random_tree, TreeShape};

    fn keys(slots: usize) -> KeyTriple {
        keygen(&HeParams::integer(DEFAULT_INT_MODULUS, slots, 20)).unwrap()
    }

    fn enc_vec(k: &KeyTriple, v: &[u64]) -> Vec<CtHandle> {
        v.iter().map(|&c| k.pk.encrypt(c).unwrap()).collect()
    }

    #[test]
    fn encode_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let e = encode01(6, 3, &mut rng).unwrap();
        assert_eq!(&e.v1[..2], &[1, 3]);
        assert!(e.v1[2] % 2 == 1 && (8..16).contains(&e.v1[2]));
        assert!(e.v0[..2].iter().all(|r| r % 2 == 0 && (8..16).contains(r)));
        assert_eq!(e.v0[2], 7);

        let e = encode01(0, 3, &mut rng).unwrap();
        assert!(e.v1.iter().all(|r| r % 2 == 1 && (8..16).contains(r)));
        assert_eq!(e.v0, vec![1, 1, 1]);

        let e = encode01(5, 3, &mut rng).unwrap();
        assert_eq!(e.v0[1], 3);
        assert!(e.v0[0] >= 8 && e.v0[2] >= 8);

        assert!(encode01(8, 3, &mut rng).is_err());
    }

    #[test]
    fn random_elements_never_collide_with_proper_ones() {
        for mu in 1..=6u32 {
            for seed in 0..3 {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                for x in 0..(1u64 << mu) {
                    let e = encode01(x, mu, &mut rng).unwrap();
                    for y in 0..(1u64 << mu) {
                        let f = encode01(y, mu, &mut rng).unwrap();
                        for l in 0..mu as usize {
                            let (a_proper, b_proper) = (e.v1[l] < 1 << mu, f.v0[l] < 1 << mu);
                            if a_proper != b_proper {
                                assert_ne!(e.v1[l], f.v0[l]);
                            }
                            if !a_proper && !b_proper {
                                assert_ne!(e.v1[l] % 2, f.v0[l] % 2);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn difference_vectors_have_unique_zero_iff_greater() {
        for mu in 1..=6u32 {
            for seed in 0..3 {
                let mut rng = ChaCha20Rng::seed_from_u64(100 + seed);
                for x in 0..(1u64 << mu) {
                    for y in 0..(1u64 << mu) {
                        let a = encode01(x, mu, &mut rng).unwrap();
                        let b = encode01(y, mu, &mut rng).unwrap();
                        let zeros = a.v1.iter().zip(&b.v0).filter(|(u, v)| u == v).count();
                        assert_eq!(zeros, usize::from(x > y), "mu={mu} x={x} y={y}");
                    }
                }
            }
        }
    }

    #[test]
    fn lin_compare_examples() {
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = encode01(6, 3, &mut rng).unwrap();
        let b = encode01(5, 3, &mut rng).unwrap();
        assert_eq!(a.v1[1], 3);
        assert_eq!(b.v0[1], 3);
        let (u, v) = (enc_vec(&k, &a.v1), enc_vec(&k, &b.v0));
        let out = lin_compare(&k.ek, &u, &v, &mut rng).unwrap();
        let zeros = out
            .iter()
            .filter(|c| k.sk.decrypt(c).unwrap().get(0) == 0)
            .count();
        assert_eq!(zeros, 1);
        assert_eq!(
            k.sk.decrypt(&lin_compare_dt(&k.ek, &u, &v).unwrap())
                .unwrap()
                .get(0),
            0
        );

        let (u, v) = (enc_vec(&k, &b.v1), enc_vec(&k, &a.v0));
        assert_ne!(
            k.sk.decrypt(&lin_compare_dt(&k.ek, &u, &v).unwrap())
                .unwrap()
                .get(0),
            0
        );

        for x in 0..16u64 {
            let a = encode01(x, 4, &mut rng).unwrap();
            let b = encode01(x, 4, &mut rng).unwrap();
            let out =
                lin_compare(&k.ek, &enc_vec(&k, &a.v1), &enc_vec(&k, &b.v0), &mut rng).unwrap();
            assert!(out.iter().all(|c| k.sk.decrypt(c).unwrap().get(0) != 0));
        }
    }

    #[test]
    fn small_modulus_is_rejected() {
        let k = keygen(&HeParams::integer(257, 1, 10)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let u = enc_vec(&k, &[1; 8]);
        assert!(matches!(
            lin_compare(&k.ek, &u, &u, &mut rng),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn mark_depth_stays_logarithmic() {
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for mu in [4u32, 8, 16] {
            let a = encode01(3, mu, &mut rng).unwrap();
            let b = encode01(2, mu, &mut rng).unwrap();
            let c = lin_compare_dt(&k.ek, &enc_vec(&k, &a.v1), &enc_vec(&k, &b.v0)).unwrap();
            assert!(c.depth() <= bitlen(mu as u64 - 1));
            assert_eq!(c.depth(), mark_depth(mu));
        }
    }

    #[test]
    fn tie_removal_matches_branching_rule() {
        for mu in 1..=6u32 {
            let mut rng = ChaCha20Rng::seed_from_u64(mu as u64);
            for x in 0..(1u64 << mu) {
                for y in 0..(1u64 << mu) {
                    let (xs, ys) = distinctify(&[x], &[y]);
                    assert_ne!(xs[0], ys[0]);
                    let a = encode01(xs[0], mu + 1, &mut rng).unwrap();
                    let b = encode01(ys[0], mu + 1, &mut rng).unwrap();
                    let right_zero = a.v1.iter().zip(&b.v0).any(|(u, v)| u == v);
                    let left_zero = b.v1.iter().zip(&a.v0).any(|(u, v)| u == v);
                    assert_eq!(right_zero, x >= y);
                    assert_eq!(left_zero, x < y);
                }
            }
        }
        assert_eq!(distinctify(&[5], &[3]), (vec![11], vec![6]));
    }

    fn decode(k: &KeyTriple, model: &TreeModel, out: &IntOutcome, packed: bool) -> Result<u64> {
        client_decode_int(
            &result_values(&k.sk, &out.outputs, packed)?,
            model.params().labels,
        )
    }

    #[test]
    fn stump_costs() {
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let t = TreeModel::from_shape(
            &TreeShape::decision(0, 5, TreeShape::Leaf(0), TreeShape::Leaf(1)),
            4,
            1,
            2,
        )
        .unwrap();
        for (x, leaf) in [(7u64, 2usize), (5, 2), (3, 1)] {
            let input = encrypt_input(&k.pk, &vec![x].into(), 4, false, &mut rng).unwrap();
            let out =
                pdte_int_run(&k.ek, &k.pk, &t, &input, IntConfig::default(), &mut rng).unwrap();
            for (id, c) in &out.costs {
                assert_eq!(k.sk.decrypt(c).unwrap().get(0) == 0, *id == leaf, "x={x}");
            }
            assert_eq!(
                decode(&k, &t, &out, false).unwrap(),
                t.classify_plain(&vec![x].into()).unwrap()
            );
            assert_eq!(out.outputs.len(), 2);
        }
    }

    #[test]
    fn random_trees_classify_correctly() {
        let k = keys(16);
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for i in 0..60 {
            let t = random_tree(6, 8, 3, 12, 0.25, &mut rng);
            let x = AttributeVector::random(&mut rng, t.params());
            let packed_enc = i % 3 == 2;
            let packed_res = i % 3 != 0;
            let input = encrypt_input(&k.pk, &x, 8, packed_enc, &mut rng).unwrap();
            let out = pdte_int_run(
                &k.ek,
                &k.pk,
                &t,
                &input,
                IntConfig {
                    packed_results: packed_res,
                },
                &mut rng,
            )
            .unwrap();
            let zero: Vec<NodeId> = out
                .costs
                .iter()
                .filter(|(_, c)| k.sk.decrypt(c).unwrap().get(0) == 0)
                .map(|(id, _)| *id)
                .collect();
            assert_eq!(zero, vec![t.reach(&x).unwrap()]);
            assert_eq!(
                decode(&k, &t, &out, packed_res).unwrap(),
                t.classify_plain(&x).unwrap()
            );
            let leaves = t.params().leaves();
            let expect = if packed_res {
                leaves.div_ceil(16)
            } else {
                leaves
            };
            assert_eq!(out.outputs.len(), expect);
        }
    }

    #[test]
    fn depth_includes_one_masking_level() {
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let t = complete_tree(4, 8, 2, &mut rng);
        let x = AttributeVector::random(&mut rng, t.params());
        let input = encrypt_input(&k.pk, &x, 8, false, &mut rng).unwrap();
        let out = pdte_int_run(&k.ek, &k.pk, &t, &input, IntConfig::default(), &mut rng).unwrap();
        let mark = mark_depth(9);
        assert!(out.costs.iter().all(|(_, c)| c.depth() == mark));
        assert!(out.outputs.iter().all(|c| c.depth() == mark + 1));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(client_decode_int(&[17, 2, 903, 4411], 5).unwrap(), 2);
        assert!(matches!(
            client_decode_int(&[17, 903], 5),
            Err(Error::Ambiguous { candidates: 0 })
        ));
        assert!(matches!(
            client_decode_int(&[1, 2], 5),
            Err(Error::Ambiguous { candidates: 2 })
        ));
    }

    #[test]
    fn binary_context_is_rejected() {
        let k = keygen(&HeParams::binary(1, 10)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(encrypt_input(&k.pk, &vec![1].into(), 4, false, &mut rng).is_err());
    }

    #[test]
    fn one_bit_deep_trees_decode_unambiguously() {
        // Small differences make unscaled marks prone to cancelling mod p.
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..200 {
            let model = complete_tree(7, 1, 2, &mut rng);
            let x = AttributeVector::random(&mut rng, model.params());
            let input = encrypt_input(&k.pk, &x, 1, false, &mut rng).unwrap();
            let out =
                pdte_int_run(&k.ek, &k.pk, &model, &input, IntConfig::default(), &mut rng).unwrap();
            let values = result_values(&k.sk, &out.outputs, false).unwrap();
            assert_eq!(
                client_decode_int(&values, model.params().labels).unwrap(),
                model.classify_plain(&x).unwrap()
            );
        }
    }
}
