//! Operation accounting: measured cost reports, closed-form predictions and
//! the benchmark runner shared by the CLI and the test suites.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::bits::{bitlen, label_width};
use crate::error::{Error, Result};
use crate::he::{keygen, CtHandle, HeParams, OpCounts, DEFAULT_INT_MODULUS};
use crate::pdte_bin::{PackingMode, PathAlgorithm};
use crate::protocol::{
    client_round_trip, Client, ClientConfig, MemoryTransport, Scheme, Server, Transport,
};
use crate::tree::{complete_tree, shaped_tree, AttributeVector, TreeModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub mult_count: u64,
    pub add_count: u64,
    pub comparison_count: u64,
    pub max_depth: u32,
    pub output_ctxt_count: usize,
    pub amortized_per_slot: f64,
}

impl CostReport {
    pub fn measured(ops: OpCounts, outputs: &[CtHandle], batch: usize) -> Self {
        CostReport {
            mult_count: ops.mul,
            add_count: ops.add,
            comparison_count: ops.comparison,
            max_depth: outputs.iter().map(CtHandle::depth).max().unwrap_or(0),
            output_ctxt_count: outputs.len(),
            amortized_per_slot: ops.mul as f64 / batch.max(1) as f64,
        }
    }

    /// `key=value` lines, keys prefixed with `prefix`.
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("mult_count", self.mult_count.to_string()),
            ("add_count", self.add_count.to_string()),
            ("comparison_count", self.comparison_count.to_string()),
            ("max_depth", self.max_depth.to_string()),
            ("output_ctxt_count", self.output_ctxt_count.to_string()),
            (
                "amortized_per_slot",
                format!("{:.2}", self.amortized_per_slot),
            ),
        ] {
            let _ = writeln!(out, "{prefix}{k}={v}");
        }
        out
    }

    /// Parses the lines written by [`CostReport::to_kv`] with an empty prefix.
    pub fn from_kv(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            text.lines()
                .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
                .ok_or_else(|| Error::Protocol(format!("report lacks {key}")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Protocol(format!("report value for {key} is not a number")))
        };
        Ok(CostReport {
            mult_count: num("mult_count")?,
            add_count: num("add_count")?,
            comparison_count: num("comparison_count")?,
            max_depth: num("max_depth")? as u32,
            output_ctxt_count: num("output_ctxt_count")? as usize,
            amortized_per_slot: get("amortized_per_slot")?
                .parse()
                .map_err(|_| Error::Protocol("bad amortized_per_slot".into()))?,
        })
    }
}

/// Model shape of a published benchmark: attributes `n`, depth `d`,
/// decision nodes `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSpec {
    pub name: &'static str,
    pub n: usize,
    pub d: usize,
    pub m: usize,
}

pub const DATASETS: [DatasetSpec; 4] = [
    DatasetSpec {
        name: "heart-disease",
        n: 13,
        d: 3,
        m: 5,
    },
    DatasetSpec {
        name: "housing",
        n: 13,
        d: 13,
        m: 92,
    },
    DatasetSpec {
        name: "spambase",
        n: 57,
        d: 17,
        m: 58,
    },
    DatasetSpec {
        name: "artificial",
        n: 16,
        d: 10,
        m: 500,
    },
];

impl DatasetSpec {
    pub fn find(name: &str) -> Option<DatasetSpec> {
        DATASETS.iter().copied().find(|d| d.name == name)
    }
}

/// Multiplicative depth bound: `|mu-1| + |d-1| + 2` for the binary scheme
/// and `|mu-1| + 1` for the integer scheme, where `mu` is the bit length
/// entering the comparison.
pub fn predicted_depth(scheme: Scheme, mu: u32, d: usize) -> u32 {
    let mu1 = bitlen(u64::from(mu.saturating_sub(1)));
    match scheme {
        Scheme::Bin => mu1 + bitlen(d.saturating_sub(1) as u64) + 2,
        Scheme::Int => mu1 + 1,
    }
}

/// Closed-form prediction for a complete tree of depth `d`.
///
/// Counts are upper estimates of the instrumented ones; depth and output
/// count are the bounds measured runs must respect.
pub fn cost_predict(
    scheme: Scheme,
    mu: u32,
    d: usize,
    packing: PackingMode,
    slots: usize,
) -> CostReport {
    let leaves = 1u64 << d;
    let m = leaves - 1;
    let (mu, d64) = (u64::from(mu), d as u64);
    let (mult_count, add_count, comparison_count, outputs) = match scheme {
        Scheme::Bin => {
            let w = d64.max(1);
            let outputs = match packing {
                PackingMode::LabelPacking | PackingMode::ThresholdPacking => 1,
                PackingMode::None | PackingMode::AttributePacking => w as usize,
            };
            (
                4 * mu * m + leaves * d64.saturating_sub(1) + leaves * w,
                6 * mu * m + leaves * w,
                m,
                outputs,
            )
        }
        Scheme::Int => {
            let outputs = match packing {
                PackingMode::None => leaves as usize,
                _ => leaves.div_ceil(slots.max(1) as u64) as usize,
            };
            (
                2 * m * mu.saturating_sub(1) + leaves,
                2 * m * mu + leaves * (d64 + 1),
                2 * m,
                outputs,
            )
        }
    };
    CostReport {
        mult_count,
        add_count,
        comparison_count,
        max_depth: predicted_depth(scheme, mu as u32, d),
        output_ctxt_count: outputs,
        amortized_per_slot: mult_count as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchShape {
    Complete { attributes: usize, depth: usize },
    Dataset(DatasetSpec),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub scheme: Scheme,
    pub packing: PackingMode,
    pub path: PathAlgorithm,
    pub bits: u32,
    pub shape: BenchShape,
    pub slots: usize,
    pub levels: u32,
    pub modulus: u64,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(scheme: Scheme, shape: BenchShape) -> Self {
        BenchConfig {
            scheme,
            packing: PackingMode::None,
            path: PathAlgorithm::Dag,
            bits: 16,
            shape,
            slots: 16,
            levels: 32,
            modulus: DEFAULT_INT_MODULUS,
            seed: 0,
        }
    }

    pub fn he_params(&self) -> HeParams {
        match self.scheme {
            Scheme::Bin => HeParams::binary(self.slots, self.levels),
            Scheme::Int => HeParams::integer(self.modulus, self.slots, self.levels),
        }
        .with_seed(self.seed)
    }

    /// Generates the benchmark model from the seed.
    pub fn model(&self) -> Result<TreeModel> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        match self.shape {
            BenchShape::Complete { attributes, depth } => {
                Ok(complete_tree(depth, self.bits, attributes, &mut rng))
            }
            BenchShape::Dataset(spec) => shaped_tree(spec.d, spec.m, self.bits, spec.n, &mut rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub params: crate::tree::TreeParams,
    pub measured: CostReport,
    pub predicted: CostReport,
    pub labels: Vec<u64>,
    pub expected: Vec<u64>,
    pub messages: usize,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

impl BenchResult {
    pub fn correct(&self) -> bool {
        self.labels == self.expected
    }

    pub fn to_kv(&self) -> String {
        let c = &self.config;
        let p = &self.params;
        let mut out = String::new();
        let name = match c.shape {
            BenchShape::Dataset(spec) => spec.name.to_string(),
            BenchShape::Complete { .. } => "complete".into(),
        };
        let path = match c.path {
            PathAlgorithm::Naive => "naive",
            PathAlgorithm::LogDepth => "logdepth",
            PathAlgorithm::Dag => "dag",
        };
        let _ = writeln!(out, "dataset={name}");
        let _ = writeln!(out, "scheme={}", c.scheme);
        let _ = writeln!(out, "packing={}", packing_name(c.packing));
        let _ = writeln!(out, "path_alg={path}");
        let _ = writeln!(out, "seed={}", c.seed);
        let _ = writeln!(
            out,
            "n={}\nd={}\nm={}\nk={}\nmu={}",
            p.attributes, p.depth, p.decisions, p.labels, p.bits
        );
        let _ = writeln!(out, "slots={}\nlevels={}", c.slots, c.levels);
        out.push_str(&self.measured.to_kv(""));
        let _ = writeln!(out, "predicted_depth={}", self.predicted.max_depth);
        let _ = writeln!(
            out,
            "predicted_outputs={}",
            self.predicted.output_ctxt_count
        );
        let _ = writeln!(out, "messages={}", self.messages);
        let _ = writeln!(
            out,
            "request_bytes={}\nresponse_bytes={}",
            self.request_bytes, self.response_bytes
        );
        let _ = writeln!(out, "correct={}", self.correct());
        out
    }
}

pub fn packing_name(p: PackingMode) -> &'static str {
    match p {
        PackingMode::None => "none",
        PackingMode::LabelPacking => "label",
        PackingMode::AttributePacking => "attr",
        PackingMode::ThresholdPacking => "thresh",
    }
}

/// Generates a model and input(s) from the seed, runs one client/server
/// round trip over an in-memory transport and collects the server's
/// instrumented counts.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    let model = config.model()?;
    let params = *model.params();
    let keys = keygen(&config.he_params())?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x5eed);
    let batch = if config.packing == PackingMode::AttributePacking {
        config.slots
    } else {
        1
    };
    let xs: Vec<AttributeVector> = (0..batch)
        .map(|_| AttributeVector::random(&mut rng, &params))
        .collect();
    let expected = xs
        .iter()
        .map(|x| model.classify_plain(x))
        .collect::<Result<Vec<_>>>()?;

    let server = Server::new(
        keys.pk.clone(),
        keys.ek.clone(),
        model,
        config.path,
        config.seed,
    );
    let client_config = ClientConfig::for_model(&params, config.scheme, config.packing);
    let mut client = Client::new(client_config, keys.pk, keys.sk, config.seed);
    let transport = MemoryTransport::default();
    let (labels, response) = client_round_trip(&mut client, &server, &transport, &xs)?;
    let measured = CostReport::from_kv(response.report.as_deref().unwrap_or(""))?;

    // The integer scheme compares distinctified values, one bit longer.
    let compared_bits = match config.scheme {
        Scheme::Bin => config.bits,
        Scheme::Int => config.bits + 1,
    };
    let mut predicted = cost_predict(
        config.scheme,
        compared_bits,
        params.depth,
        config.packing,
        config.slots,
    );
    if config.scheme == Scheme::Bin {
        predicted.output_ctxt_count = match config.packing {
            PackingMode::LabelPacking | PackingMode::ThresholdPacking => 1,
            _ => label_width(params.labels),
        };
    } else if config.packing != PackingMode::None {
        predicted.output_ctxt_count = params.leaves().div_ceil(config.slots);
    } else {
        predicted.output_ctxt_count = params.leaves();
    }
    Ok(BenchResult {
        config: config.clone(),
        params,
        measured,
        predicted,
        labels,
        expected,
        messages: transport.messages(),
        request_bytes: transport.bytes_sent().0,
        response_bytes: transport.bytes_sent().1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_formulas() {
        assert_eq!(predicted_depth(Scheme::Bin, 16, 10), 10);
        assert_eq!(predicted_depth(Scheme::Int, 16, 10), 5);
        assert_eq!(predicted_depth(Scheme::Bin, 1, 1), 2);
    }

    #[test]
    fn output_predictions() {
        assert_eq!(
            cost_predict(Scheme::Bin, 16, 6, PackingMode::LabelPacking, 16).output_ctxt_count,
            1
        );
        assert_eq!(
            cost_predict(Scheme::Bin, 16, 6, PackingMode::None, 16).output_ctxt_count,
            6
        );
        assert_eq!(
            cost_predict(Scheme::Int, 16, 6, PackingMode::LabelPacking, 16).output_ctxt_count,
            4
        );
        assert_eq!(
            cost_predict(Scheme::Int, 16, 6, PackingMode::None, 16).output_ctxt_count,
            64
        );
    }

    #[test]
    fn dataset_table() {
        let h = DatasetSpec::find("housing").unwrap();
        assert_eq!((h.n, h.d, h.m), (13, 13, 92));
        assert!(DatasetSpec::find("iris").is_none());
    }

    #[test]
    fn report_round_trip() {
        let r = CostReport {
            mult_count: 10,
            add_count: 4,
            comparison_count: 2,
            max_depth: 3,
            output_ctxt_count: 1,
            amortized_per_slot: 2.25,
        };
        let back = CostReport::from_kv(&r.to_kv("")).unwrap();
        assert_eq!(back.mult_count, 10);
        assert_eq!(back.max_depth, 3);
        assert!(back.amortized_per_slot == 2.25);
    }

    #[test]
    fn heart_disease_bench_counts_comparisons() {
        let mut cfg = BenchConfig::new(
            Scheme::Bin,
            BenchShape::Dataset(DatasetSpec::find("heart-disease").unwrap()),
        );
        cfg.seed = 7;
        let r = run_bench(&cfg).unwrap();
        assert!(r.correct());
        assert_eq!(r.measured.comparison_count, 5);
        assert_eq!(r.messages, 2);
        assert!(r.measured.max_depth <= r.predicted.max_depth);
        let again = run_bench(&cfg).unwrap();
        assert_eq!(again.to_kv(), r.to_kv());
    }
}
