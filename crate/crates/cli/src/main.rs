use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pdte_core::bits::bitlen;
use pdte_core::cost::{cost_predict, run_bench, BenchConfig, BenchShape, DatasetSpec, DATASETS};
use pdte_core::he::{keygen, EvaluationKey, HeParams, PublicKey, SecretKey, DEFAULT_INT_MODULUS};
use pdte_core::pdte_bin::{PackingMode, PathAlgorithm};
use pdte_core::protocol::{
    ClassifyResponse, Client, ClientConfig, DirTransport, Scheme, Server, Transport,
};
use pdte_core::tree::{complete_tree, random_tree};
use pdte_core::{AttributeVector, TreeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const PUBLIC_KEY: &str = "public.key";
const SECRET_KEY: &str = "secret.key";
const EVAL_KEY: &str = "eval.key";
const CLIENT_STATE: &str = "client.txt";

#[derive(Parser)]
#[command(
    name = "pdte",
    version,
    about = "Private decision tree evaluation over a reference HE backend"
)]
struct Cli {
    /// Worker threads for the evaluation engines (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key triple into a directory.
    Keygen(KeygenArgs),
    /// Generate a random model file.
    GenModel(GenModelArgs),
    /// Encrypt attribute vectors into a request file.
    Encrypt(EncryptArgs),
    /// Evaluate a request file against a model (server side).
    Eval(EvalArgs),
    /// Decrypt a response file into labels.
    Decrypt(DecryptArgs),
    /// Run one instrumented round trip on a generated model.
    Bench(BenchArgs),
    /// Print predicted costs for a configuration.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Bin,
    Int,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Bin => Scheme::Bin,
            SchemeArg::Int => Scheme::Int,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PackingArg {
    None,
    Label,
    Attr,
    Thresh,
}

impl From<PackingArg> for PackingMode {
    fn from(p: PackingArg) -> Self {
        match p {
            PackingArg::None => PackingMode::None,
            PackingArg::Label => PackingMode::LabelPacking,
            PackingArg::Attr => PackingMode::AttributePacking,
            PackingArg::Thresh => PackingMode::ThresholdPacking,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Naive,
    Logdepth,
    Dag,
}

impl From<PathArg> for PathAlgorithm {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Naive => PathAlgorithm::Naive,
            PathArg::Logdepth => PathAlgorithm::LogDepth,
            PathArg::Dag => PathAlgorithm::Dag,
        }
    }
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long, value_enum, default_value = "bin")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 16)]
    slots: usize,
    #[arg(long, default_value_t = 32)]
    levels: u32,
    /// Plaintext modulus for the integer scheme.
    #[arg(long, default_value_t = DEFAULT_INT_MODULUS)]
    modulus: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving the three key files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenModelArgs {
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    bits: u32,
    #[arg(long, default_value_t = 4)]
    attributes: usize,
    /// Label count; without it the tree is complete with one label per leaf.
    #[arg(long)]
    labels: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncryptArgs {
    #[arg(long)]
    keys: PathBuf,
    #[arg(long, value_enum, default_value = "bin")]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value = "none")]
    packing: PackingArg,
    /// Model file to take the public shape (bits, attributes, labels) from.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    attributes: Option<usize>,
    #[arg(long)]
    labels: Option<u64>,
    /// Comma-separated attribute values; repeat for a batch.
    #[arg(long, required = true)]
    input: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    offline_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    keys: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "dag")]
    path_alg: PathArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    offline_dir: PathBuf,
}

#[derive(Args)]
struct DecryptArgs {
    #[arg(long)]
    keys: PathBuf,
    #[arg(long)]
    offline_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, value_enum, default_value = "dag")]
    path_alg: PathArg,
    #[arg(long, default_value_t = 32)]
    levels: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long, value_enum, default_value = "bin")]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value = "none")]
    packing: PackingArg,
    /// One of heart-disease, housing, spambase, artificial.
    #[arg(long, conflicts_with_all = ["depth", "attributes"])]
    dataset: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 4)]
    attributes: usize,
    #[arg(long, default_value_t = 16)]
    bits: u32,
    #[arg(long, default_value_t = 16)]
    slots: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Also print the depth formula and the depth measured on a generated model.
    #[arg(long)]
    formula: bool,
    #[arg(long, default_value_t = 32)]
    levels: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Keygen(a) => keygen_cmd(a),
        Command::GenModel(a) => gen_model(a),
        Command::Encrypt(a) => encrypt(a),
        Command::Eval(a) => eval(a),
        Command::Decrypt(a) => decrypt(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn keygen_cmd(a: KeygenArgs) -> Result<String> {
    let params = match a.scheme {
        SchemeArg::Bin => HeParams::binary(a.slots, a.levels),
        SchemeArg::Int => HeParams::integer(a.modulus, a.slots, a.levels),
    }
    .with_seed(a.seed);
    let keys = keygen(&params)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    write(&a.out.join(PUBLIC_KEY), &keys.pk.to_text())?;
    write(&a.out.join(SECRET_KEY), &keys.sk.to_text())?;
    write(&a.out.join(EVAL_KEY), &keys.ek.to_text())?;
    Ok(format!(
        "keys={}\nslots={}\nlevels={}\nmodulus={}\n",
        a.out.display(),
        a.slots,
        a.levels,
        params.modulus
    ))
}

fn gen_model(a: GenModelArgs) -> Result<String> {
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let model = match a.labels {
        None => complete_tree(a.depth, a.bits, a.attributes, &mut rng),
        Some(k) => random_tree(a.depth, a.bits, a.attributes, k, 0.25, &mut rng),
    };
    write(&a.out, &model.to_text())?;
    let p = model.params();
    Ok(format!(
        "model={}\nn={}\nd={}\nm={}\nk={}\nmu={}\n",
        a.out.display(),
        p.attributes,
        p.depth,
        p.decisions,
        p.labels,
        p.bits
    ))
}

fn parse_input(text: &str) -> Result<AttributeVector> {
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<u64>()
                .with_context(|| format!("bad attribute value {v:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributeVector::new(values))
}

fn client_state(c: &ClientConfig) -> String {
    format!(
        "scheme={}\npacking={}\nbits={}\nattributes={}\nlabels={}\n",
        c.scheme,
        c.packing.code(),
        c.bits,
        c.attributes,
        c.labels
    )
}

fn parse_client_state(text: &str) -> Result<ClientConfig> {
    let get = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| anyhow!("client state lacks {key}"))
    };
    let code: u8 = get("packing")?.parse()?;
    Ok(ClientConfig {
        scheme: get("scheme")?.parse()?,
        packing: PackingMode::from_code(code)
            .ok_or_else(|| anyhow!("unknown packing code {code}"))?,
        bits: get("bits")?.parse()?,
        attributes: get("attributes")?.parse()?,
        labels: get("labels")?.parse()?,
    })
}

fn encrypt(a: EncryptArgs) -> Result<String> {
    let shape = a
        .model
        .as_deref()
        .map(|p| Ok::<_, anyhow::Error>(TreeModel::from_text(&read(p)?)?))
        .transpose()?;
    let shape = shape.as_ref().map(|m| m.params());
    let bits = a
        .bits
        .or(shape.map(|p| p.bits))
        .ok_or_else(|| anyhow!("--bits or --model is required"))?;
    let attributes = a
        .attributes
        .or(shape.map(|p| p.attributes))
        .ok_or_else(|| anyhow!("--attributes or --model is required"))?;
    let labels = a
        .labels
        .or(shape.map(|p| p.labels))
        .ok_or_else(|| anyhow!("--labels or --model is required"))?;
    let config = ClientConfig {
        scheme: a.scheme.into(),
        packing: a.packing.into(),
        bits,
        attributes,
        labels,
    };
    let pk = PublicKey::from_text(&read(&a.keys.join(PUBLIC_KEY))?)?;
    let sk = SecretKey::from_text(&read(&a.keys.join(SECRET_KEY))?)?;
    let xs = a
        .input
        .iter()
        .map(|s| parse_input(s))
        .collect::<Result<Vec<_>>>()?;
    let mut client = Client::new(config, pk, sk, a.seed);
    let request = client.request(&xs)?;
    let transport = DirTransport::new(&a.offline_dir)?;
    let bytes = request.to_bytes();
    transport.send_request(&bytes)?;
    write(&a.offline_dir.join(CLIENT_STATE), &client_state(&config))?;
    Ok(format!(
        "request={}\nrequest_bytes={}\nciphertexts={}\n",
        a.offline_dir.join(DirTransport::REQUEST_FILE).display(),
        bytes.len(),
        request.blobs.len()
    ))
}

fn eval(a: EvalArgs) -> Result<String> {
    let pk = PublicKey::from_text(&read(&a.keys.join(PUBLIC_KEY))?)?;
    let ek = EvaluationKey::from_text(&read(&a.keys.join(EVAL_KEY))?)?;
    let model = TreeModel::from_text(&read(&a.model)?)?;
    let server = Server::new(pk, ek, model, a.path_alg.into(), a.seed);
    let transport = DirTransport::new(&a.offline_dir)?;
    let response = server.serve_bytes(&transport.recv_request()?)?;
    transport.send_response(&response)?;
    let parsed = ClassifyResponse::from_bytes(&response)?;
    let mut out = format!("response_bytes={}\n", response.len());
    out.push_str(parsed.report.as_deref().unwrap_or(""));
    Ok(out)
}

fn decrypt(a: DecryptArgs) -> Result<String> {
    let config = parse_client_state(&read(&a.offline_dir.join(CLIENT_STATE))?)?;
    let pk = PublicKey::from_text(&read(&a.keys.join(PUBLIC_KEY))?)?;
    let sk = SecretKey::from_text(&read(&a.keys.join(SECRET_KEY))?)?;
    let client = Client::new(config, pk, sk, 0);
    let transport = DirTransport::new(&a.offline_dir)?;
    let response = ClassifyResponse::from_bytes(&transport.recv_response()?)?;
    let labels = client.decode(&response)?;
    let mut out = String::new();
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "label[{i}]={l}");
    }
    Ok(out)
}

fn dataset(name: &str) -> Result<DatasetSpec> {
    DatasetSpec::find(name).ok_or_else(|| {
        let known: Vec<&str> = DATASETS.iter().map(|d| d.name).collect();
        anyhow!("unknown dataset {name:?}; known: {}", known.join(", "))
    })
}

fn bench_config(shape: &ShapeArgs, levels: u32, seed: u64) -> Result<BenchConfig> {
    let tree = match (&shape.dataset, shape.depth) {
        (Some(name), _) => BenchShape::Dataset(dataset(name)?),
        (None, Some(depth)) => BenchShape::Complete {
            attributes: shape.attributes,
            depth,
        },
        (None, None) => bail!("either --dataset or --depth is required"),
    };
    let mut config = BenchConfig::new(shape.scheme.into(), tree);
    config.packing = shape.packing.into();
    config.bits = shape.bits;
    config.slots = shape.slots;
    config.levels = levels;
    config.seed = seed;
    Ok(config)
}

fn bench(a: BenchArgs) -> Result<String> {
    let mut config = bench_config(&a.shape, a.levels, a.seed)?;
    config.path = a.path_alg.into();
    let result = run_bench(&config)?;
    if !result.correct() {
        bail!(
            "decrypted labels {:?} differ from the plaintext labels {:?}",
            result.labels,
            result.expected
        );
    }
    Ok(result.to_kv())
}

fn report(a: ReportArgs) -> Result<String> {
    let config = bench_config(&a.shape, a.levels, a.seed)?;
    let d = match config.shape {
        BenchShape::Dataset(spec) => spec.d,
        BenchShape::Complete { depth, .. } => depth,
    };
    let mu = config.bits;
    let predicted = cost_predict(config.scheme, mu, d, config.packing, config.slots);
    let mut out = format!("scheme={}\nmu={mu}\nd={d}\n", config.scheme);
    out.push_str(&predicted.to_kv("predicted_"));
    if a.formula {
        let (text, terms) = match config.scheme {
            Scheme::Bin => (
                "|mu-1|+|d-1|+2",
                format!(
                    "{}+{}+2",
                    bitlen(u64::from(mu.saturating_sub(1))),
                    bitlen(d.saturating_sub(1) as u64)
                ),
            ),
            Scheme::Int => (
                "|mu-1|+1",
                format!("{}+1", bitlen(u64::from(mu.saturating_sub(1)))),
            ),
        };
        let result = run_bench(&config)?;
        let _ = writeln!(out, "formula={text}\nformula_terms={terms}");
        let _ = writeln!(out, "measured_depth={}", result.measured.max_depth);
        let _ = writeln!(out, "measured_bound={}", result.predicted.max_depth);
        let _ = writeln!(
            out,
            "within_bound={}",
            result.measured.max_depth <= result.predicted.max_depth
        );
    }
    Ok(out)
}
