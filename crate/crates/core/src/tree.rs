//! Decision tree model, BFS indexing, plaintext classification and the
//! canonical model file.
//!
//! Nodes live in an arena indexed by their BFS position (root = 0). Every
//! decision sends `x[attr] >= thr` to the right child and everything else to
//! the left. Trees need not be complete: [`TreeModel::levels`] groups the
//! nodes by depth for ragged shapes too.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::label_width;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Largest supported input bitlength.
pub const MAX_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Decision {
        attr: usize,
        thr: u64,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        label: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        match self.kind {
            NodeKind::Decision { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }
}

/// Public shape parameters of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// `n`: attribute count.
    pub attributes: usize,
    /// `d`: length of the longest root-to-leaf path.
    pub depth: usize,
    /// `m`: decision node count.
    pub decisions: usize,
    /// `M`: total node count.
    pub nodes: usize,
    /// `k`: size of the label domain `[0, k-1]`.
    pub labels: u64,
    /// `mu`: input bitlength.
    pub bits: u32,
}

impl TreeParams {
    /// Bits per output label.
    pub fn label_bits(&self) -> usize {
        label_width(self.labels)
    }

    pub fn leaves(&self) -> usize {
        self.nodes - self.decisions
    }
}

/// Recursive description used to build models; BFS ids are assigned on
/// conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeShape {
    Decision {
        attr: usize,
        thr: u64,
        left: Box<TreeShape>,
        right: Box<TreeShape>,
    },
    Leaf(u64),
}

impl TreeShape {
    pub fn decision(attr: usize, thr: u64, left: TreeShape, right: TreeShape) -> Self {
        TreeShape::Decision {
            attr,
            thr,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    levels: Vec<Vec<NodeId>>,
    node_level: Vec<usize>,
    params: TreeParams,
}

/// Client input: `n` unsigned integers of at most `mu` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVector {
    values: Vec<u64>,
}

impl AttributeVector {
    pub fn new(values: Vec<u64>) -> Self {
        AttributeVector { values }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks dimension and bitlength against a model.
    pub fn check(&self, params: &TreeParams) -> Result<()> {
        if self.values.len() != params.attributes {
            return Err(Error::Input(format!(
                "attribute vector has {} entries, model expects {}",
                self.values.len(),
                params.attributes
            )));
        }
        if let Some(v) = self.values.iter().find(|&&v| v >> params.bits != 0) {
            return Err(Error::Input(format!(
                "attribute value {v} does not fit in {} bits",
                params.bits
            )));
        }
        Ok(())
    }

    /// Uniform random vector for a model.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, params: &TreeParams) -> Self {
        AttributeVector {
            values: (0..params.attributes)
                .map(|_| rng.gen_range(0..1u64 << params.bits))
                .collect(),
        }
    }
}

impl From<Vec<u64>> for AttributeVector {
    fn from(values: Vec<u64>) -> Self {
        AttributeVector::new(values)
    }
}

impl TreeModel {
    /// Builds a model from a shape; ids follow BFS order.
    pub fn from_shape(
        shape: &TreeShape,
        bits: u32,
        attributes: usize,
        labels: u64,
    ) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut queue: VecDeque<(&TreeShape, Option<NodeId>)> = VecDeque::new();
        queue.push_back((shape, None));
        // Children receive ids in the order they are enqueued.
        let mut next_id = 1;
        while let Some((s, parent)) = queue.pop_front() {
            let id = nodes.len();
            let kind = match s {
                TreeShape::Leaf(label) => NodeKind::Leaf { label: *label },
                TreeShape::Decision {
                    attr,
                    thr,
                    left,
                    right,
                } => {
                    let (l, r) = (next_id, next_id + 1);
                    next_id += 2;
                    queue.push_back((left, Some(id)));
                    queue.push_back((right, Some(id)));
                    NodeKind::Decision {
                        attr: *attr,
                        thr: *thr,
                        left: l,
                        right: r,
                    }
                }
            };
            nodes.push(Node { id, parent, kind });
        }
        Self::from_nodes(bits, attributes, labels, nodes)
    }

    /// Validates an arena of nodes and derives parents, levels and params.
    ///
    /// Parent links in the input are ignored and recomputed.
    pub fn from_nodes(
        bits: u32,
        attributes: usize,
        labels: u64,
        mut nodes: Vec<Node>,
    ) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::parse(
                None,
                format!("bits must lie in [1, {MAX_BITS}], got {bits}"),
            ));
        }
        if attributes == 0 {
            return Err(Error::parse(None, "model needs at least one attribute"));
        }
        if labels == 0 {
            return Err(Error::parse(None, "label count must be positive"));
        }
        if nodes.is_empty() {
            return Err(Error::parse(None, "model has no nodes"));
        }
        for (pos, node) in nodes.iter().enumerate() {
            if node.id != pos {
                return Err(Error::parse(
                    node.id,
                    format!("node listed at position {pos}; ids must be BFS positions"),
                ));
            }
        }
        if nodes[0].is_leaf() {
            return Err(Error::parse(0, "root must be a decision node"));
        }
        let count = nodes.len();
        let mut parent: Vec<Option<NodeId>> = vec![None; count];
        for node in &nodes {
            if let NodeKind::Decision {
                attr,
                thr,
                left,
                right,
            } = node.kind
            {
                if attr >= attributes {
                    return Err(Error::parse(
                        node.id,
                        format!("attribute index {attr} out of range [0, {attributes})"),
                    ));
                }
                if thr >> bits != 0 {
                    return Err(Error::parse(
                        node.id,
                        format!("threshold {thr} does not fit in {bits} bits"),
                    ));
                }
                for child in [left, right] {
                    if child >= count {
                        return Err(Error::parse(
                            node.id,
                            format!("dangling child reference {child}"),
                        ));
                    }
                    if child == 0 || parent[child].is_some() || left == right {
                        return Err(Error::parse(
                            node.id,
                            format!("node {child} has more than one parent"),
                        ));
                    }
                    parent[child] = Some(node.id);
                }
            }
        }
        // BFS from the root must visit every node exactly in id order.
        let mut node_level = vec![usize::MAX; count];
        let mut levels: Vec<Vec<NodeId>> = Vec::new();
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        let mut visited = 0;
        while let Some((id, depth)) = queue.pop_front() {
            if id != visited {
                return Err(Error::parse(
                    id,
                    format!("ids are not in BFS order: expected {visited}"),
                ));
            }
            visited += 1;
            node_level[id] = depth;
            if levels.len() == depth {
                levels.push(Vec::new());
            }
            levels[depth].push(id);
            if let Some((l, r)) = nodes[id].children() {
                queue.push_back((l, depth + 1));
                queue.push_back((r, depth + 1));
            }
        }
        if visited != count {
            let orphan = parent
                .iter()
                .skip(1)
                .position(Option::is_none)
                .map(|p| p + 1);
            return Err(Error::parse(orphan, "node is unreachable from the root"));
        }
        let depth = levels.len() - 1;
        let label_cap = if depth >= 64 {
            u64::MAX
        } else {
            (1u64 << depth) - 1
        };
        for node in &nodes {
            if let NodeKind::Leaf { label } = node.kind {
                if label >= labels {
                    return Err(Error::parse(
                        node.id,
                        format!("label {label} outside [0, {}]", labels - 1),
                    ));
                }
                if label > label_cap {
                    return Err(Error::parse(
                        node.id,
                        format!("label {label} exceeds 2^d - 1 = {label_cap}"),
                    ));
                }
            }
        }
        for (node, p) in nodes.iter_mut().zip(parent) {
            node.parent = p;
        }
        let decisions = nodes.iter().filter(|n| !n.is_leaf()).count();
        Ok(TreeModel {
            params: TreeParams {
                attributes,
                depth,
                decisions,
                nodes: count,
                labels,
                bits,
            },
            nodes,
            levels,
            node_level,
        })
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// `levels[i]` holds the ids of all nodes at depth `i`, in BFS order.
    pub fn levels(&self) -> &[Vec<NodeId>] {
        &self.levels
    }

    pub fn level_of(&self, id: NodeId) -> usize {
        self.node_level[id]
    }

    pub fn decision_nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| !n.is_leaf())
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn label(&self, leaf: NodeId) -> Option<u64> {
        match self.nodes[leaf].kind {
            NodeKind::Leaf { label } => Some(label),
            NodeKind::Decision { .. } => None,
        }
    }

    /// Nodes on the path from the root to `id`, root first.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// The ancestor of `id` at depth `level` (or `id` itself).
    pub fn ancestor_at(&self, id: NodeId, level: usize) -> NodeId {
        let mut cur = id;
        while self.node_level[cur] > level {
            cur = self.nodes[cur].parent.expect("non-root node has a parent");
        }
        cur
    }

    /// Leaf reached by `x`.
    pub fn reach(&self, x: &AttributeVector) -> Result<NodeId> {
        x.check(&self.params)?;
        let mut cur = self.root();
        while let NodeKind::Decision {
            attr,
            thr,
            left,
            right,
        } = self.nodes[cur].kind
        {
            cur = if x.values()[attr] >= thr { right } else { left };
        }
        Ok(cur)
    }

    /// Plaintext classification; the oracle for every encrypted path.
    pub fn classify_plain(&self, x: &AttributeVector) -> Result<u64> {
        let leaf = self.reach(x)?;
        Ok(self.label(leaf).expect("reach ends at a leaf"))
    }

    /// Number of decision nodes testing each attribute (`m_i`).
    pub fn attribute_usage(&self) -> Vec<usize> {
        let mut usage = vec![0; self.params.attributes];
        for node in self.decision_nodes() {
            if let NodeKind::Decision { attr, .. } = node.kind {
                usage[attr] += 1;
            }
        }
        usage
    }

    /// Canonical text form: UTF-8, fixed key order, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{{\"bits\":{},\"attributes\":{},\"labels\":{},\"nodes\":[",
            self.params.bits, self.params.attributes, self.params.labels
        );
        for (i, node) in self.nodes.iter().enumerate() {
            let raw = RawNode::from(node);
            let line = serde_json::to_string(&raw).expect("node serializes");
            let sep = if i + 1 == self.nodes.len() { "" } else { "," };
            let _ = writeln!(out, "{line}{sep}");
        }
        out.push_str("]}\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let raw: RawModel =
            serde_json::from_str(text).map_err(|e| Error::parse(None, e.to_string()))?;
        raw.into_model()
    }

    /// Recursive description of the tree.
    pub fn to_shape(&self) -> TreeShape {
        fn build(model: &TreeModel, id: NodeId) -> TreeShape {
            match model.nodes[id].kind {
                NodeKind::Leaf { label } => TreeShape::Leaf(label),
                NodeKind::Decision {
                    attr,
                    thr,
                    left,
                    right,
                } => TreeShape::decision(attr, thr, build(model, left), build(model, right)),
            }
        }
        build(self, 0)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawModel {
    pub bits: u32,
    pub attributes: usize,
    pub labels: u64,
    pub nodes: Vec<RawNode>,
}

impl RawModel {
    pub(crate) fn into_model(self) -> Result<TreeModel> {
        let nodes = self
            .nodes
            .into_iter()
            .map(RawNode::into_node)
            .collect::<Result<Vec<_>>>()?;
        TreeModel::from_nodes(self.bits, self.attributes, self.labels, nodes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawNode {
    id: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    attr: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thr: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u64>,
}

impl From<&Node> for RawNode {
    fn from(node: &Node) -> Self {
        match node.kind {
            NodeKind::Decision {
                attr,
                thr,
                left,
                right,
            } => RawNode {
                id: node.id,
                kind: "decision".into(),
                attr: Some(attr),
                thr: Some(thr),
                left: Some(left),
                right: Some(right),
                label: None,
            },
            NodeKind::Leaf { label } => RawNode {
                id: node.id,
                kind: "leaf".into(),
                attr: None,
                thr: None,
                left: None,
                right: None,
                label: Some(label),
            },
        }
    }
}

impl RawNode {
    fn into_node(self) -> Result<Node> {
        let kind = match self.kind.as_str() {
            "decision" => {
                if self.label.is_some() {
                    return Err(Error::parse(self.id, "decision node carries a label"));
                }
                match (self.attr, self.thr, self.left, self.right) {
                    (Some(attr), Some(thr), Some(left), Some(right)) => NodeKind::Decision {
                        attr,
                        thr,
                        left,
                        right,
                    },
                    _ => {
                        return Err(Error::parse(
                            self.id,
                            "decision node needs attr, thr, left and right",
                        ))
                    }
                }
            }
            "leaf" => {
                if self.attr.is_some()
                    || self.thr.is_some()
                    || self.left.is_some()
                    || self.right.is_some()
                {
                    return Err(Error::parse(self.id, "leaf carries decision fields"));
                }
                let label = self
                    .label
                    .ok_or_else(|| Error::parse(self.id, "leaf without label"))?;
                NodeKind::Leaf { label }
            }
            other => {
                return Err(Error::parse(
                    self.id,
                    format!("unknown node kind {other:?}"),
                ))
            }
        };
        Ok(Node {
            id: self.id,
            parent: None,
            kind,
        })
    }
}

/// Complete tree of depth `d`; leaf `j` (in BFS order) carries label `j`.
pub fn complete_tree<R: Rng + ?Sized>(
    depth: usize,
    bits: u32,
    attributes: usize,
    rng: &mut R,
) -> TreeModel {
    assert!(depth >= 1, "a complete tree needs depth at least 1");
    let mut next_label = 0u64;
    fn build<R: Rng + ?Sized>(
        level: usize,
        depth: usize,
        bits: u32,
        n: usize,
        rng: &mut R,
    ) -> TreeShape {
        if level == depth {
            return TreeShape::Leaf(0);
        }
        let attr = rng.gen_range(0..n);
        let thr = rng.gen_range(0..1u64 << bits);
        let left = build(level + 1, depth, bits, n, rng);
        let right = build(level + 1, depth, bits, n, rng);
        TreeShape::decision(attr, thr, left, right)
    }
    let shape = build(0, depth, bits, attributes, rng);
    let labels = 1u64 << depth;
    let model =
        TreeModel::from_shape(&shape, bits, attributes, labels).expect("complete tree is valid");
    relabel_bfs(model, &mut next_label)
}

/// Random tree with exactly `decisions` decision nodes and depth exactly
/// `depth`. Leaves are labeled in BFS order, so `k` equals the leaf count.
pub fn shaped_tree<R: Rng + ?Sized>(
    depth: usize,
    decisions: usize,
    bits: u32,
    attributes: usize,
    rng: &mut R,
) -> Result<TreeModel> {
    if depth == 0 || decisions < depth || (depth < 63 && decisions > (1usize << depth) - 1) {
        return Err(Error::Input(format!(
            "no tree of depth {depth} has {decisions} decision nodes"
        )));
    }
    // Grow an arena of (level, children) cells, starting from a spine of
    // length `depth` so the depth is attained.
    let mut children: Vec<Option<(usize, usize)>> = vec![None];
    let mut level = vec![0usize];
    let mut open: Vec<usize> = Vec::new();
    let mut cur = 0;
    for _ in 0..depth {
        let (l, r) = (children.len(), children.len() + 1);
        children.push(None);
        children.push(None);
        level.push(level[cur] + 1);
        level.push(level[cur] + 1);
        children[cur] = Some((l, r));
        let (next, other) = if rng.gen_bool(0.5) { (r, l) } else { (l, r) };
        open.push(other);
        cur = next;
    }
    let mut made = depth;
    while made < decisions {
        open.retain(|&c| level[c] < depth && children[c].is_none());
        let pick = open.swap_remove(rng.gen_range(0..open.len()));
        let (l, r) = (children.len(), children.len() + 1);
        children.push(None);
        children.push(None);
        level.push(level[pick] + 1);
        level.push(level[pick] + 1);
        children[pick] = Some((l, r));
        open.push(l);
        open.push(r);
        made += 1;
    }
    fn to_shape<R: Rng + ?Sized>(
        c: usize,
        children: &[Option<(usize, usize)>],
        bits: u32,
        n: usize,
        rng: &mut R,
    ) -> TreeShape {
        match children[c] {
            None => TreeShape::Leaf(0),
            Some((l, r)) => {
                let attr = rng.gen_range(0..n);
                let thr = rng.gen_range(0..1u64 << bits);
                let left = to_shape(l, children, bits, n, rng);
                let right = to_shape(r, children, bits, n, rng);
                TreeShape::decision(attr, thr, left, right)
            }
        }
    }
    let shape = to_shape(0, &children, bits, attributes, rng);
    let leaves = decisions as u64 + 1;
    let model = TreeModel::from_shape(&shape, bits, attributes, leaves)?;
    let mut next = 0;
    Ok(relabel_bfs(model, &mut next))
}

/// Random ragged tree: each node below the root becomes a leaf with
/// probability `leaf_prob`, and every node at `max_depth` is a leaf. The
/// label domain has size `labels`; labels are uniform in it.
pub fn random_tree<R: Rng + ?Sized>(
    max_depth: usize,
    bits: u32,
    attributes: usize,
    labels: u64,
    leaf_prob: f64,
    rng: &mut R,
) -> TreeModel {
    assert!(max_depth >= 1);
    fn build<R: Rng + ?Sized>(
        level: usize,
        max: usize,
        p: f64,
        bits: u32,
        n: usize,
        rng: &mut R,
    ) -> TreeShape {
        if level == max || (level > 0 && rng.gen_bool(p)) {
            return TreeShape::Leaf(0);
        }
        let attr = rng.gen_range(0..n);
        let thr = rng.gen_range(0..1u64 << bits);
        let left = build(level + 1, max, p, bits, n, rng);
        let right = build(level + 1, max, p, bits, n, rng);
        TreeShape::decision(attr, thr, left, right)
    }
    let shape = build(0, max_depth, leaf_prob, bits, attributes, rng);
    let model =
        TreeModel::from_shape(&shape, bits, attributes, labels.max(1)).expect("valid shape");
    let cap = (1u64 << model.params.depth.min(63)) - 1;
    let domain = labels.min(cap + 1).max(1);
    let mut nodes = model.nodes;
    for node in nodes.iter_mut() {
        if let NodeKind::Leaf { label } = &mut node.kind {
            *label = rng.gen_range(0..domain);
        }
    }
    TreeModel::from_nodes(bits, attributes, labels.max(1), nodes).expect("relabeled tree is valid")
}

fn relabel_bfs(model: TreeModel, next: &mut u64) -> TreeModel {
    let TreeModel {
        mut nodes,
        levels,
        node_level,
        params,
    } = model;
    for node in nodes.iter_mut() {
        if let NodeKind::Leaf { label } = &mut node.kind {
            *label = *next;
            *next += 1;
        }
    }
    let params = TreeParams {
        labels: *next,
        ..params
    };
    TreeModel {
        nodes,
        levels,
        node_level,
        params,
    }
}
