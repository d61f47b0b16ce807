//! Binary instantiation: bitwise-encrypted inputs evaluated with Boolean
//! circuits over `p = 2`.
//!
//! The server runs three stages:
//!
//! 1. [`eval_node`] compares every threshold with its attribute and stores
//!    the decision bit on the outgoing edges (`b` right, `1 - b` left).
//! 2. One path aggregation turns every leaf mark into the product of the
//!    decision bits on its root path: [`eval_path_naive`] (sequential,
//!    linear depth), [`eval_path_efficient`] (per-leaf logarithmic product)
//!    or [`eval_path_precomp`] (shared prefixes via a precomputed
//!    [`DagPlan`]).
//! 3. [`eval_leaves`] sums `mark * label` over the leaves.
//!
//! Exactly one leaf mark is 1 per slot, so the sum is the label.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::to_bits_msb;
use crate::circuits::{eval_mul, she_lt, BitCiphertextVector};
use crate::error::{Error, Result};
use crate::he::{CtHandle, Decryptor, Encryptor, Evaluator, Mode, SlotVector};
use crate::tree::{AttributeVector, NodeId, NodeKind, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackingMode {
    /// One value per ciphertext, replicated across slots.
    None,
    /// Label bits packed in one result ciphertext.
    LabelPacking,
    /// Slot `σ` of every input ciphertext belongs to attribute vector `σ`.
    AttributePacking,
    /// Thresholds testing the same attribute share ciphertexts.
    ThresholdPacking,
}

impl PackingMode {
    pub fn code(self) -> u8 {
        match self {
            PackingMode::None => 0,
            PackingMode::LabelPacking => 1,
            PackingMode::AttributePacking => 2,
            PackingMode::ThresholdPacking => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => PackingMode::None,
            1 => PackingMode::LabelPacking,
            2 => PackingMode::AttributePacking,
            3 => PackingMode::ThresholdPacking,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathAlgorithm {
    Naive,
    LogDepth,
    #[default]
    Dag,
}

/// Encrypted client input: one bit vector per attribute.
#[derive(Debug, Clone)]
pub struct EncryptedInputBin {
    pub packing: PackingMode,
    pub attributes: Vec<BitCiphertextVector>,
    /// Number of attribute vectors carried (greater than one only with
    /// attribute packing).
    pub batch: usize,
}

impl EncryptedInputBin {
    pub fn ciphertexts(&self) -> impl Iterator<Item = &CtHandle> + '_ {
        self.attributes.iter().flat_map(|a| a.bits())
    }
}

/// Encrypts one vector (or up to `s` vectors with attribute packing).
pub fn encrypt_input(
    enc: &dyn Encryptor,
    inputs: &[AttributeVector],
    bits: u32,
    packing: PackingMode,
) -> Result<EncryptedInputBin> {
    let params = enc.params();
    if params.mode != Mode::Binary {
        return Err(Error::Unsupported(
            "binary input needs a p = 2 context".into(),
        ));
    }
    let Some(first) = inputs.first() else {
        return Err(Error::Input("no attribute vector to encrypt".into()));
    };
    let n = first.len();
    if inputs.iter().any(|x| x.len() != n) {
        return Err(Error::Input("attribute vectors differ in length".into()));
    }
    if let Some(v) = inputs
        .iter()
        .flat_map(|x| x.values())
        .find(|&&v| v >> bits != 0)
    {
        return Err(Error::Input(format!(
            "attribute value {v} does not fit in {bits} bits"
        )));
    }
    let width = bits as usize;
    let attributes = if packing == PackingMode::AttributePacking {
        if inputs.len() > params.slots {
            return Err(Error::Input(format!(
                "{} vectors exceed the {} available slots",
                inputs.len(),
                params.slots
            )));
        }
        (0..n)
            .map(|i| {
                let bits = (0..width)
                    .rev()
                    .map(|b| {
                        let column: Vec<u64> =
                            inputs.iter().map(|x| (x.values()[i] >> b) & 1).collect();
                        enc.encrypt_packed(&SlotVector::padded(&column, params.slots))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(BitCiphertextVector::new(bits))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        if inputs.len() != 1 {
            return Err(Error::Input(format!(
                "{} vectors given; only attribute packing batches inputs",
                inputs.len()
            )));
        }
        first
            .values()
            .iter()
            .map(|&v| {
                let bits = to_bits_msb(v, width)
                    .into_iter()
                    .map(|b| enc.encrypt(b))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(BitCiphertextVector::new(bits))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(EncryptedInputBin {
        packing,
        attributes,
        batch: inputs.len(),
    })
}

/// Per-node edge marks (`cmp`) for one evaluation. Index = node id.
pub type Marks = Vec<Option<CtHandle>>;

fn check_input(model: &TreeModel, input: &EncryptedInputBin) -> Result<()> {
    let p = model.params();
    if input.attributes.len() != p.attributes {
        return Err(Error::Input(format!(
            "input carries {} attributes, model expects {}",
            input.attributes.len(),
            p.attributes
        )));
    }
    if input.attributes.iter().any(|a| a.len() != p.bits as usize) {
        return Err(Error::Input(format!(
            "every attribute must carry {} bits",
            p.bits
        )));
    }
    Ok(())
}

/// Encrypts the thresholds of `nodes` into packed bit vectors, slot `t`
/// holding the threshold of `nodes[t]`.
fn packed_thresholds(
    enc: &dyn Encryptor,
    model: &TreeModel,
    nodes: &[NodeId],
) -> Result<BitCiphertextVector> {
    let s = enc.params().slots;
    let thresholds: Vec<u64> = nodes
        .iter()
        .map(|&id| match model.node(id).kind {
            NodeKind::Decision { thr, .. } => thr,
            NodeKind::Leaf { .. } => unreachable!("only decision nodes carry thresholds"),
        })
        .collect();
    let bits = (0..model.params().bits)
        .rev()
        .map(|b| {
            let column: Vec<u64> = thresholds.iter().map(|t| (t >> b) & 1).collect();
            enc.encrypt_packed(&SlotVector::padded(&column, s))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(BitCiphertextVector::new(bits))
}

/// Computes all decision bits.
///
/// For decision node `v` with `b = [x_attr >= thr]` the right child's mark is
/// `b` and the left child's is `1 - b`. The comparator yields `[thr > x]`,
/// which is exactly the left mark. The root's mark is the constant 1.
pub fn eval_node(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    model: &TreeModel,
    input: &EncryptedInputBin,
) -> Result<Marks> {
    check_input(model, input)?;
    let mut marks: Marks = vec![None; model.params().nodes];
    marks[model.root()] = Some(ev.trivial(1)?);
    let edges: Vec<(NodeId, CtHandle, NodeId, CtHandle)> =
        if input.packing == PackingMode::ThresholdPacking {
            let s = ev.slots();
            let mut groups: Vec<(usize, Vec<NodeId>)> = Vec::new();
            for (attr, _) in model.attribute_usage().iter().enumerate() {
                let nodes: Vec<NodeId> = model
                    .decision_nodes()
                    .filter(|n| matches!(n.kind, NodeKind::Decision { attr: a, .. } if a == attr))
                    .map(|n| n.id)
                    .collect();
                groups.extend(nodes.chunks(s).map(|c| (attr, c.to_vec())));
            }
            let per_group = groups
                .par_iter()
                .map(|(attr, nodes)| {
                    let thresholds = packed_thresholds(enc, model, nodes)?;
                    let lt = she_lt(ev, &input.attributes[*attr], &thresholds)?;
                    nodes
                        .iter()
                        .enumerate()
                        .map(|(slot, &id)| {
                            let left_mark = if slot == 0 {
                                lt.clone()
                            } else {
                                ev.shift_left(&lt, slot)?
                            };
                            let right_mark = ev.not(&left_mark)?;
                            let (l, r) = model.node(id).children().unwrap();
                            Ok((l, left_mark, r, right_mark))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            per_group.into_iter().flatten().collect()
        } else {
            let decisions: Vec<&crate::tree::Node> = model.decision_nodes().collect();
            decisions
                .par_iter()
                .map(|node| {
                    let NodeKind::Decision {
                        attr,
                        thr,
                        left,
                        right,
                    } = node.kind
                    else {
                        unreachable!()
                    };
                    let y = to_bits_msb(thr, model.params().bits as usize)
                        .into_iter()
                        .map(|b| enc.encrypt(b))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    let lt = she_lt(ev, &input.attributes[attr], &BitCiphertextVector::new(y))?;
                    let right_mark = ev.not(&lt)?;
                    Ok((left, lt, right, right_mark))
                })
                .collect::<Result<Vec<_>>>()?
        };
    for (l, lm, r, rm) in edges {
        marks[l] = Some(lm);
        marks[r] = Some(rm);
    }
    Ok(marks)
}

fn mark(marks: &Marks, id: NodeId) -> &CtHandle {
    marks[id].as_ref().expect("eval_node sets every mark")
}

/// Sequential aggregation: each child mark is multiplied by its parent's
/// (already aggregated) mark, level by level. Depth grows linearly with `d`.
pub fn eval_path_naive(ev: &dyn Evaluator, model: &TreeModel, marks: &mut Marks) -> Result<()> {
    // Level 1 already holds complete products (the root mark is 1).
    for level in model.levels().iter().skip(1) {
        let parents: Vec<NodeId> = level
            .iter()
            .copied()
            .filter(|&v| !model.node(v).is_leaf())
            .collect();
        let updates = parents
            .par_iter()
            .map(|&v| {
                let (l, r) = model.node(v).children().unwrap();
                let pv = mark(marks, v);
                Ok([
                    (l, ev.mul(mark(marks, l), pv)?),
                    (r, ev.mul(mark(marks, r), pv)?),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        for (id, c) in updates.into_iter().flatten() {
            marks[id] = Some(c);
        }
    }
    Ok(())
}

/// Per-leaf product of the path marks with [`eval_mul`].
pub fn eval_path_efficient(ev: &dyn Evaluator, model: &TreeModel, marks: &mut Marks) -> Result<()> {
    let leaves: Vec<NodeId> = model.leaves().map(|n| n.id).collect();
    let updates = leaves
        .par_iter()
        .map(|&leaf| {
            let path: Vec<CtHandle> = model
                .path(leaf)
                .into_iter()
                .skip(1)
                .map(|id| mark(marks, id).clone())
                .collect();
            Ok((leaf, eval_mul(ev, 1, path.len(), &path)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for (id, c) in updates {
        marks[id] = Some(c);
    }
    Ok(())
}

/// Dependency lists for [`eval_path_precomp`]; depends only on the tree shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagPlan {
    /// Ancestors in push order; evaluation pops from the back.
    stacks: Vec<Vec<NodeId>>,
}

impl DagPlan {
    pub fn stack(&self, id: NodeId) -> &[NodeId] {
        &self.stacks[id]
    }

    /// Total number of multiplications the plan performs.
    pub fn edge_count(&self) -> usize {
        self.stacks.iter().map(Vec::len).sum()
    }

    pub fn contains_only_ancestors(&self, model: &TreeModel) -> bool {
        self.stacks.iter().enumerate().all(|(id, stack)| {
            let path = model.path(id);
            stack.iter().all(|a| *a != id && path.contains(a))
        })
    }
}

/// Builds the dependency lists for levels `1..=d`.
pub fn compute_dag(model: &TreeModel) -> DagPlan {
    let mut plan = DagPlan {
        stacks: vec![Vec::new(); model.params().nodes],
    };
    compute_dag_range(model, &mut plan, 1, model.params().depth);
    plan
}

fn add_edge(model: &TreeModel, plan: &mut DagPlan, v: NodeId, dest_level: usize) {
    let w = model.ancestor_at(v, dest_level);
    plan.stacks[v].push(w);
}

fn compute_dag_range(model: &TreeModel, plan: &mut DagPlan, up: usize, low: usize) {
    if up >= low {
        return;
    }
    let eta = low - up + 1;
    let mid = crate::circuits::split_point(eta) - 1 + up;
    for &v in &model.levels()[low] {
        add_edge(model, plan, v, mid);
    }
    // Leaves above the deepest level of this range.
    for i in mid + 1..low {
        for &v in &model.levels()[i] {
            if model.node(v).is_leaf() {
                add_edge(model, plan, v, mid);
            }
        }
    }
    compute_dag_range(model, plan, up, mid);
    compute_dag_range(model, plan, mid + 1, low);
}

/// Level-by-level aggregation using precomputed dependency lists.
///
/// All nodes of a level finish before the next level starts, since stacks
/// reference accumulated marks of shallower nodes.
pub fn eval_path_precomp(
    ev: &dyn Evaluator,
    model: &TreeModel,
    plan: &DagPlan,
    marks: &mut Marks,
) -> Result<()> {
    for level in model.levels().iter().skip(1) {
        let updates = level
            .par_iter()
            .filter(|&&v| !plan.stack(v).is_empty())
            .map(|&v| {
                let mut acc = mark(marks, v).clone();
                for &w in plan.stack(v).iter().rev() {
                    acc = ev.mul(&acc, mark(marks, w))?;
                }
                Ok((v, acc))
            })
            .collect::<Result<Vec<_>>>()?;
        for (id, c) in updates {
            marks[id] = Some(c);
        }
    }
    Ok(())
}

/// Sums `mark_v * label_v` over the leaves.
///
/// * `None` / `AttributePacking`: one ciphertext per label bit, MSB first.
/// * `LabelPacking`: one ciphertext holding the label bits in slots
///   `0..w`, MSB first.
/// * `ThresholdPacking`: only slot 0 of each mark is meaningful; labels are
///   multiplied in as `[c_j | 0 | ... | 0]`, which also clears the other
///   slots, and the bit results are shifted into one ciphertext.
pub fn eval_leaves(
    ev: &dyn Evaluator,
    model: &TreeModel,
    marks: &Marks,
    packing: PackingMode,
    label_bits: usize,
) -> Result<Vec<CtHandle>> {
    let s = ev.slots();
    if matches!(
        packing,
        PackingMode::LabelPacking | PackingMode::ThresholdPacking
    ) && label_bits > s
    {
        return Err(Error::Unsupported(format!(
            "{label_bits} label bits do not fit in {s} slots"
        )));
    }
    let leaves: Vec<(NodeId, u64)> = model
        .leaves()
        .map(|n| (n.id, model.label(n.id).unwrap()))
        .collect();
    let terms = leaves
        .par_iter()
        .map(|&(id, label)| {
            let bits = to_bits_msb(label, label_bits);
            let m = mark(marks, id);
            match packing {
                PackingMode::LabelPacking => {
                    let packed = ev.trivial_packed(&SlotVector::padded(&bits, s))?;
                    Ok(vec![ev.mul(m, &packed)?])
                }
                PackingMode::ThresholdPacking => bits
                    .iter()
                    .map(|&b| Ok(ev.mul(m, &ev.trivial_packed(&SlotVector::padded(&[b], s))?)?))
                    .collect::<Result<Vec<_>>>(),
                PackingMode::None | PackingMode::AttributePacking => bits
                    .iter()
                    .map(|&b| Ok(ev.mul(m, &ev.trivial(b)?)?))
                    .collect::<Result<Vec<_>>>(),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let width = terms[0].len();
    let mut sums = Vec::with_capacity(width);
    for j in 0..width {
        let mut acc = terms[0][j].clone();
        for t in &terms[1..] {
            acc = ev.add(&acc, &t[j])?;
        }
        sums.push(acc);
    }
    if packing == PackingMode::ThresholdPacking {
        let mut acc = sums[0].clone();
        for (j, bit) in sums.iter().enumerate().skip(1) {
            acc = ev.add(&acc, &ev.shift_right(bit, j)?)?;
        }
        return Ok(vec![acc]);
    }
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinConfig {
    pub path: PathAlgorithm,
    /// Overrides the model's label width (forests share one width).
    pub label_bits: Option<usize>,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            path: PathAlgorithm::Dag,
            label_bits: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BinOutcome {
    pub outputs: Vec<CtHandle>,
    /// Multiplications spent in the path-aggregation stage.
    pub path_mults: u64,
    /// Leaf marks after aggregation, indexed by node id.
    pub leaf_marks: Vec<(NodeId, CtHandle)>,
}

/// Decision bits, then the chosen path aggregation, then the leaf sum.
pub fn pdte_bin_run(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    model: &TreeModel,
    input: &EncryptedInputBin,
    config: BinConfig,
) -> Result<BinOutcome> {
    if let Some(pos) = input.ciphertexts().position(|c| !ev.capacity_check(c)) {
        return Err(Error::Protocol(format!(
            "input ciphertext {pos} failed the capacity check"
        )));
    }
    let mut marks = eval_node(ev, enc, model, input)?;
    let before = ev.metrics().snapshot();
    match config.path {
        PathAlgorithm::Naive => eval_path_naive(ev, model, &mut marks)?,
        PathAlgorithm::LogDepth => eval_path_efficient(ev, model, &mut marks)?,
        PathAlgorithm::Dag => {
            let plan = compute_dag(model);
            eval_path_precomp(ev, model, &plan, &mut marks)?
        }
    }
    let path_mults = ev.metrics().snapshot().mul - before.mul;
    let label_bits = config
        .label_bits
        .unwrap_or_else(|| model.params().label_bits());
    let outputs = eval_leaves(ev, model, &marks, input.packing, label_bits)?;
    let leaf_marks = model
        .leaves()
        .map(|n| (n.id, mark(&marks, n.id).clone()))
        .collect();
    Ok(BinOutcome {
        outputs,
        path_mults,
        leaf_marks,
    })
}

/// Client-side decoding of binary results: one label per batched vector.
pub fn decode_labels(
    dec: &dyn Decryptor,
    outputs: &[CtHandle],
    packing: PackingMode,
    label_bits: usize,
    batch: usize,
) -> Result<Vec<u64>> {
    let fold = |bits: &mut dyn Iterator<Item = u64>| bits.fold(0u64, |acc, b| (acc << 1) | (b & 1));
    match packing {
        PackingMode::LabelPacking | PackingMode::ThresholdPacking => {
            let [out] = outputs else {
                return Err(Error::Protocol(format!(
                    "expected 1 result ciphertext, got {}",
                    outputs.len()
                )));
            };
            let slots = dec.decrypt(out)?;
            if label_bits > slots.len() {
                return Err(Error::Protocol("label wider than the slot vector".into()));
            }
            Ok(vec![fold(
                &mut slots.as_slice()[..label_bits].iter().copied(),
            )])
        }
        PackingMode::None | PackingMode::AttributePacking => {
            if outputs.len() != label_bits {
                return Err(Error::Protocol(format!(
                    "expected {label_bits} result ciphertexts, got {}",
                    outputs.len()
                )));
            }
            let decrypted = outputs
                .iter()
                .map(|c| dec.decrypt(c))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((0..batch)
                .map(|slot| fold(&mut decrypted.iter().map(|sv| sv[slot])))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::he::{keygen, HeParams, KeyTriple};
    use crate::tree::{complete_tree, random_tree, TreeShape};

    fn keys(slots: usize) -> KeyTriple {
        keygen(&HeParams::binary(slots, 40)).unwrap()
    }

    fn stump() -> TreeModel {
        TreeModel::from_shape(
            &TreeShape::decision(0, 5, TreeShape::Leaf(0), TreeShape::Leaf(1)),
            4,
            1,
            2,
        )
        .unwrap()
    }

    fn chain(levels: usize) -> TreeModel {
        // Left spine of `levels` decision nodes.
        let mut shape = TreeShape::Leaf(0);
        for i in 0..levels {
            shape = TreeShape::decision(0, i as u64, shape, TreeShape::Leaf(1));
        }
        TreeModel::from_shape(&shape, 4, 1, 2).unwrap()
    }

    fn first_slot(k: &KeyTriple, c: &CtHandle) -> u64 {
        k.sk.decrypt(c).unwrap().get(0)
    }

    #[test]
    fn decision_bits_on_stump() {
        let k = keys(4);
        let t = stump();
        for (x, right) in [(7, 1), (5, 1), (3, 0)] {
            let input = encrypt_input(&k.pk, &[vec![x].into()], 4, PackingMode::None).unwrap();
            let marks = eval_node(&k.ek, &k.pk, &t, &input).unwrap();
            assert_eq!(first_slot(&k, marks[2].as_ref().unwrap()), right, "x={x}");
            assert_eq!(
                first_slot(&k, marks[1].as_ref().unwrap()),
                1 - right,
                "x={x}"
            );
        }
    }

    #[test]
    fn dag_for_chains() {
        // Decision bits sit at levels 1..=d of a spine; the deepest spine
        // node is at level d.
        let t = chain(4);
        let plan = compute_dag(&t);
        let spine: Vec<NodeId> = (1..=4).map(|l| t.levels()[l][0]).collect();
        assert_eq!(plan.stack(spine[1]), &[spine[0]]);
        assert_eq!(plan.stack(spine[3]), &[spine[1], spine[2]]);
        assert!(plan.stack(spine[0]).is_empty());
        assert!(plan.stack(spine[2]).is_empty());
        assert!(plan.contains_only_ancestors(&t));

        let t = chain(5);
        let plan = compute_dag(&t);
        let spine: Vec<NodeId> = (1..=5).map(|l| t.levels()[l][0]).collect();
        assert_eq!(plan.stack(spine[4]), &[spine[3]]);
        assert_eq!(plan.stack(spine[3]), &[spine[1], spine[2]]);

        let plan = compute_dag(&stump());
        assert_eq!(plan.edge_count(), 0);
    }

    #[test]
    fn dag_on_depth_two_complete_tree() {
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let t = complete_tree(2, 4, 2, &mut rng);
        let plan = compute_dag(&t);
        for leaf in t.leaves() {
            assert_eq!(plan.stack(leaf.id).len(), 1);
        }
        let x = AttributeVector::random(&mut rng, t.params());
        let input = encrypt_input(&k.pk, &[x], 4, PackingMode::None).unwrap();
        let mut marks = eval_node(&k.ek, &k.pk, &t, &input).unwrap();
        let level2_before = marks[3].as_ref().unwrap().depth();
        eval_path_precomp(&k.ek, &t, &plan, &mut marks).unwrap();
        assert_eq!(marks[3].as_ref().unwrap().depth(), level2_before + 1);
    }

    #[test]
    fn single_decision_path_is_unchanged() {
        let k = keys(1);
        let t = stump();
        let input = encrypt_input(&k.pk, &[vec![9].into()], 4, PackingMode::None).unwrap();
        let marks = eval_node(&k.ek, &k.pk, &t, &input).unwrap();
        let mut after = marks.clone();
        eval_path_efficient(&k.ek, &t, &mut after).unwrap();
        assert_eq!(marks, after);
        let mut naive = marks.clone();
        eval_path_naive(&k.ek, &t, &mut naive).unwrap();
        assert_eq!(first_slot(&k, naive[1].as_ref().unwrap()), 0);
        assert_eq!(first_slot(&k, naive[2].as_ref().unwrap()), 1);
    }

    #[test]
    fn leaves_are_one_hot_for_every_algorithm() {
        let k = keys(1);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..40 {
            let t = random_tree(6, 5, 3, 10, 0.3, &mut rng);
            let x = AttributeVector::random(&mut rng, t.params());
            let expect = t.reach(&x).unwrap();
            let input = encrypt_input(&k.pk, &[x], 5, PackingMode::None).unwrap();
            for path in [
                PathAlgorithm::Naive,
                PathAlgorithm::LogDepth,
                PathAlgorithm::Dag,
            ] {
                let out = pdte_bin_run(
                    &k.ek,
                    &k.pk,
                    &t,
                    &input,
                    BinConfig {
                        path,
                        label_bits: None,
                    },
                )
                .unwrap();
                let hot: Vec<NodeId> = out
                    .leaf_marks
                    .iter()
                    .filter(|(_, c)| first_slot(&k, c) == 1)
                    .map(|(id, _)| *id)
                    .collect();
                assert_eq!(hot, vec![expect], "{path:?}");
            }
        }
    }

    #[test]
    fn output_counts_per_packing() {
        let k = keys(16);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let t = complete_tree(5, 6, 3, &mut rng);
        let x = AttributeVector::random(&mut rng, t.params());
        for (packing, count) in [
            (PackingMode::None, 5),
            (PackingMode::LabelPacking, 1),
            (PackingMode::AttributePacking, 5),
            (PackingMode::ThresholdPacking, 1),
        ] {
            let input = encrypt_input(&k.pk, std::slice::from_ref(&x), 6, packing).unwrap();
            let out = pdte_bin_run(&k.ek, &k.pk, &t, &input, BinConfig::default()).unwrap();
            assert_eq!(out.outputs.len(), count, "{packing:?}");
            let got = decode_labels(&k.sk, &out.outputs, packing, 5, 1).unwrap();
            assert_eq!(got, vec![t.classify_plain(&x).unwrap()], "{packing:?}");
        }
    }

    #[test]
    fn threshold_packing_spills_into_several_ciphertexts() {
        // 2 slots and a single attribute: 7 thresholds need 4 groups.
        let k = keys(2);
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let t = complete_tree(3, 5, 1, &mut rng);
        for _ in 0..20 {
            let x = AttributeVector::random(&mut rng, t.params());
            let input = encrypt_input(
                &k.pk,
                std::slice::from_ref(&x),
                5,
                PackingMode::ThresholdPacking,
            )
            .unwrap();
            let ev = k.ek.metered();
            let marks = eval_node(&ev, &k.pk, &t, &input).unwrap();
            assert_eq!(ev.metrics().snapshot().comparison, 4);
            let scalar_input =
                encrypt_input(&k.pk, std::slice::from_ref(&x), 5, PackingMode::None).unwrap();
            let scalar = eval_node(&k.ek, &k.pk, &t, &scalar_input).unwrap();
            for id in 1..t.params().nodes {
                assert_eq!(
                    first_slot(&k, marks[id].as_ref().unwrap()),
                    first_slot(&k, scalar[id].as_ref().unwrap())
                );
            }
        }
    }

    #[test]
    fn attribute_packing_batches_vectors() {
        let k = keys(8);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let t = complete_tree(4, 6, 3, &mut rng);
        let xs: Vec<AttributeVector> = (0..8)
            .map(|_| AttributeVector::random(&mut rng, t.params()))
            .collect();
        let input = encrypt_input(&k.pk, &xs, 6, PackingMode::AttributePacking).unwrap();
        let out = pdte_bin_run(&k.ek, &k.pk, &t, &input, BinConfig::default()).unwrap();
        let labels =
            decode_labels(&k.sk, &out.outputs, PackingMode::AttributePacking, 4, 8).unwrap();
        let expect: Vec<u64> = xs.iter().map(|x| t.classify_plain(x).unwrap()).collect();
        assert_eq!(labels, expect);
        let too_many: Vec<AttributeVector> = (0..9).map(|_| xs[0].clone()).collect();
        assert!(encrypt_input(&k.pk, &too_many, 6, PackingMode::AttributePacking).is_err());
    }

    #[test]
    fn forged_input_is_rejected_before_evaluation() {
        let k = keys(1);
        let t = stump();
        let mut input = encrypt_input(&k.pk, &[vec![3].into()], 4, PackingMode::None).unwrap();
        let c = input.attributes[0].bits()[0].clone();
        let forged = CtHandle::from_parts(c.context(), 41, 40, c.payload().into());
        let mut bits = input.attributes[0].clone().into_inner();
        bits[0] = forged;
        input.attributes[0] = BitCiphertextVector::new(bits);
        let ev = k.ek.metered();
        assert!(matches!(
            pdte_bin_run(&ev, &k.pk, &t, &input, BinConfig::default()),
            Err(Error::Protocol(_))
        ));
        assert_eq!(ev.metrics().snapshot().mul, 0);
    }
}
