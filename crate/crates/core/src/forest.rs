//! Random forests over the binary instantiation with private vote counting.
//!
//! Every tree yields an encrypted label. Per label the server counts
//! matching trees with a full adder, then selects the winner either by a
//! majority threshold or by pairwise comparison of the counts. The result
//! is one ciphertext holding the winning label's bits in slots `0..w`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{bitlen, label_width, to_bits_msb};
use crate::circuits::{she_cmp, she_equal, she_fadder, she_lt, BitCiphertextVector};
use crate::error::{Error, Result};
use crate::he::{CtHandle, Encryptor, Evaluator, SlotVector};
use crate::pdte_bin::{pdte_bin_run, BinConfig, EncryptedInputBin, PackingMode, PathAlgorithm};
use crate::tree::TreeModel;

#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    attributes: usize,
    bits: u32,
    labels: u64,
}

/// Forest file: shared header plus the model files of the trees, resolved
/// relative to the forest file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    bits: u32,
    attributes: usize,
    labels: u64,
    trees: Vec<String>,
}

impl ForestModel {
    pub fn new(trees: Vec<TreeModel>) -> Result<Self> {
        let Some(first) = trees.first() else {
            return Err(Error::Input("a forest needs at least one tree".into()));
        };
        let p = first.params();
        let (attributes, bits, labels) = (p.attributes, p.bits, p.labels);
        for (j, t) in trees.iter().enumerate() {
            let q = t.params();
            if (q.attributes, q.bits, q.labels) != (attributes, bits, labels) {
                return Err(Error::Input(format!(
                    "tree {j} has (n, mu, k) = ({}, {}, {}), forest uses ({attributes}, {bits}, {labels})",
                    q.attributes, q.bits, q.labels
                )));
            }
        }
        Ok(ForestModel {
            trees,
            attributes,
            bits,
            labels,
        })
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn attributes(&self) -> usize {
        self.attributes
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn labels(&self) -> u64 {
        self.labels
    }

    /// Bits per encrypted label, shared by all trees.
    pub fn label_bits(&self) -> usize {
        label_width(self.labels)
    }

    /// Majority threshold `⌈N/2⌉`.
    pub fn threshold(&self) -> u64 {
        self.trees.len().div_ceil(2) as u64
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(None, format!("forest header: {e}")))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let trees = manifest
            .trees
            .iter()
            .map(|file| {
                let p = base.join(file);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Input(format!("cannot read {}: {e}", p.display())))?;
                TreeModel::from_text(&text)
            })
            .collect::<Result<Vec<_>>>()?;
        let forest = ForestModel::new(trees)?;
        if (forest.attributes, forest.bits, forest.labels)
            != (manifest.attributes, manifest.bits, manifest.labels)
        {
            return Err(Error::parse(None, "forest header disagrees with its trees"));
        }
        Ok(forest)
    }

    /// Writes `tree-<j>.json` files next to `path` and the header at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Input(format!("cannot write forest: {e}"));
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("forest");
        let mut files = Vec::with_capacity(self.trees.len());
        for (j, t) in self.trees.iter().enumerate() {
            let name = format!("{stem}-tree-{j}.json");
            std::fs::write(base.join(&name), t.to_text()).map_err(io)?;
            files.push(name);
        }
        let manifest = Manifest {
            bits: self.bits,
            attributes: self.attributes,
            labels: self.labels,
            trees: files,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(io)
    }

    /// Plain vote counts per label.
    pub fn votes_plain(&self, x: &crate::tree::AttributeVector) -> Result<Vec<u64>> {
        let mut f = vec![0u64; self.labels as usize];
        for t in &self.trees {
            f[t.classify_plain(x)? as usize] += 1;
        }
        Ok(f)
    }
}

/// Encrypted per-label vote counts, `|N|` bits each.
fn tallies(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    forest: &ForestModel,
    input: &EncryptedInputBin,
) -> Result<Vec<BitCiphertextVector>> {
    if input.packing != PackingMode::None {
        return Err(Error::Unsupported(
            "forests take unpacked binary input".into(),
        ));
    }
    let w = forest.label_bits();
    if w > ev.slots() {
        return Err(Error::Unsupported(format!(
            "{w} label bits do not fit in {} slots",
            ev.slots()
        )));
    }
    let config = BinConfig {
        path: PathAlgorithm::Dag,
        label_bits: Some(w),
    };
    let results = forest
        .trees
        .par_iter()
        .map(|t| {
            Ok(BitCiphertextVector::new(
                pdte_bin_run(ev, enc, t, input, config)?.outputs,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    (0..forest.labels)
        .into_par_iter()
        .map(|i| {
            let c = BitCiphertextVector::trivial(ev, i, w)?;
            let matches = results
                .iter()
                .map(|r| she_equal(ev, r, &c))
                .collect::<Result<Vec<_>>>()?;
            she_fadder(ev, &matches)
        })
        .collect()
}

/// `Σ e_i ⊙ [c_i bits | 0 ...]`.
fn select(ev: &dyn Evaluator, forest: &ForestModel, e: &[CtHandle]) -> Result<CtHandle> {
    let w = forest.label_bits();
    let s = ev.slots();
    let terms = e
        .par_iter()
        .enumerate()
        .map(|(i, ei)| {
            let packed = ev.trivial_packed(&SlotVector::padded(&to_bits_msb(i as u64, w), s))?;
            Ok(ev.mul(ei, &packed)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = terms[0].clone();
    for t in &terms[1..] {
        acc = ev.add(&acc, t)?;
    }
    Ok(acc)
}

/// Label reached by at least `⌈N/2⌉` trees.
///
/// If two labels both reach the threshold (possible for even `N`) the
/// result is the XOR of their encodings.
pub fn forest_majority(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    forest: &ForestModel,
    input: &EncryptedInputBin,
) -> Result<CtHandle> {
    let f = tallies(ev, enc, forest, input)?;
    let n = forest.trees.len() as u64;
    let t = BitCiphertextVector::trivial(ev, forest.threshold(), bitlen(n) as usize)?;
    let e = f
        .par_iter()
        .map(|fi| Ok(ev.not(&she_lt(ev, fi, &t)?)?))
        .collect::<Result<Vec<_>>>()?;
    select(ev, forest, &e)
}

/// Label with the strictly largest vote count. Without a unique maximum
/// no label is selected and the result is 0.
pub fn forest_argmax(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    forest: &ForestModel,
    input: &EncryptedInputBin,
) -> Result<CtHandle> {
    let f = tallies(ev, enc, forest, input)?;
    let k = f.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let cmps = pairs
        .par_iter()
        .map(|&(i, j)| she_cmp(ev, &f[i], &f[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut beta: Vec<Vec<Option<CtHandle>>> = vec![vec![None; k]; k];
    for (&(i, j), (gt, lt)) in pairs.iter().zip(cmps) {
        beta[i][j] = Some(gt);
        beta[j][i] = Some(lt);
    }
    let kbar = BitCiphertextVector::trivial(ev, k as u64, bitlen(k as u64) as usize)?;
    let e = (0..k)
        .into_par_iter()
        .map(|i| {
            let row = (0..k)
                .map(|j| match &beta[i][j] {
                    Some(b) => Ok(b.clone()),
                    None => ev.trivial(1),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let r = she_fadder(ev, &row)?;
            she_equal(ev, &r, &kbar)
        })
        .collect::<Result<Vec<_>>>()?;
    select(ev, forest, &e)
}

/// Encrypted vote counts, exposed only for tracing and tests.
#[cfg(any(test, feature = "trace"))]
pub fn trace_frequencies(
    ev: &dyn Evaluator,
    enc: &dyn Encryptor,
    forest: &ForestModel,
    input: &EncryptedInputBin,
) -> Result<Vec<BitCiphertextVector>> {
    tallies(ev, enc, forest, input)
}
