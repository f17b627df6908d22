use std::fs;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tip::ckks::{CkksContext, CkksError, CkksParams, KeySet};
use tip::influence::io::{
    deserialize_model, deserialize_projection, read_dataset, serialize_model, serialize_projection,
};
use tip::influence::{
    build_projection, estimate_kfac, projected_gradient, refit_head, train, utility_score, Activation, Example, Head,
    InfluenceError, Model, ModelSpec, ProjectionOperator, TrainConfig,
};
use tip::market::{self, output, BenchConfig, EncryptedValuation, MarketConfig, MarketError, Mode};
use tip::protocol::{run_inproc, tcp, Broker, Buyer, BuyerConfig, ProtocolError, Seller, SessionLog, SessionReport};

#[derive(Parser)]
#[command(name = "tip", version, about = "Encrypted influence-based data valuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a CKKS key set (public, secret and evaluation key files).
    Keygen(KeygenArgs),
    /// Score seller candidates against a buyer's evaluation set.
    Score(ScoreArgs),
    /// Run the synthetic market simulation.
    Simulate(SimulateArgs),
    /// Measure per-sample cost of encrypted scoring.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// CKKS parameter JSON (defaults to the desk-scale set).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct KeygenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    Inproc,
    Tcp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Buyer,
    Seller,
    Broker,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Buyer training data (CSV); needed to train the model and for curvature.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Buyer evaluation data (CSV).
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Seller candidates (CSV).
    #[arg(long)]
    seller: Option<PathBuf>,
    /// Model checkpoint; trained from --train when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Projection checkpoint; built from --train when absent.
    #[arg(long)]
    projection: Option<PathBuf>,
    /// Hidden width of the model trained when --model is absent.
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    /// Per-layer projection ranks as in×out pairs, e.g. "0x0,17x1".
    /// Defaults to the full last layer only.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    damping: f64,
    /// Load keys from this directory instead of generating them.
    #[arg(long)]
    keys_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "encrypted")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "inproc")]
    transport: Transport,
    /// Run a single role over TCP (requires --listen or --connect).
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    #[arg(long, conflicts_with = "connect")]
    listen: Option<SocketAddr>,
    #[arg(long)]
    connect: Option<SocketAddr>,
    /// Add the plaintext reference column and report agreement.
    #[arg(long)]
    verify: bool,
    /// Transport timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Plaintext,
    Encrypted,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Plaintext => Mode::Plaintext,
            ModeArg::Encrypted => Mode::Encrypted,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Market config JSON (defaults to the built-in desk market).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "plaintext")]
    mode: ModeArg,
    #[arg(long)]
    keys_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Projected gradient dimension.
    #[arg(long, default_value_t = 384)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    batches: Vec<usize>,
    #[arg(long, value_enum, default_value = "encrypted")]
    mode: ModeArg,
    #[arg(long)]
    keys_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

/// Exit code 2 for usage and configuration problems, 1 for everything else.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<CkksError> for Failure {
    fn from(e: CkksError) -> Self {
        match e {
            CkksError::InvalidParams(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<InfluenceError> for Failure {
    fn from(e: InfluenceError) -> Self {
        match e {
            InfluenceError::Malformed(_) | InfluenceError::EmptyDataset => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::NoCandidates => Failure::Usage(e.to_string()),
            ProtocolError::Ckks(e) => e.into(),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<MarketError> for Failure {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            MarketError::Ckks(e) => e.into(),
            MarketError::Protocol(e) => e.into(),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Score(a) => score(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_params(path: Option<&Path>) -> Result<CkksParams, Failure> {
    match path {
        None => Ok(CkksParams::desk_scale()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Ok(CkksParams::from_json(&text)?)
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

const PUBLIC_KEY_FILE: &str = "public.tipk";
const SECRET_KEY_FILE: &str = "secret.tipk";
const EVAL_KEY_FILE: &str = "eval.tipk";

fn keygen(a: KeygenArgs) -> Result<(), Failure> {
    let params = load_params(a.common.params.as_deref())?;
    let ctx = CkksContext::new(params)?;
    let keys = ctx.keygen(a.common.seed);
    fs::create_dir_all(&a.common.out)?;
    fs::write(
        a.common.out.join(PUBLIC_KEY_FILE),
        ctx.serialize_public_key(&keys.public_key),
    )?;
    fs::write(
        a.common.out.join(SECRET_KEY_FILE),
        ctx.serialize_secret_key(&keys.secret_key),
    )?;
    fs::write(
        a.common.out.join(EVAL_KEY_FILE),
        ctx.serialize_eval_keys(&keys.eval_keys),
    )?;
    println!("params_hash {}", hex(ctx.params_hash()));
    Ok(())
}

fn load_keys(ctx: &CkksContext, dir: &Path) -> Result<KeySet, Failure> {
    let read =
        |name: &str| fs::read(dir.join(name)).map_err(|e| Failure::Usage(format!("{}: {e}", dir.join(name).display())));
    Ok(KeySet {
        public_key: ctx.deserialize_public_key(&read(PUBLIC_KEY_FILE)?)?,
        secret_key: ctx.deserialize_secret_key(&read(SECRET_KEY_FILE)?)?,
        eval_keys: ctx.deserialize_eval_keys(&read(EVAL_KEY_FILE)?)?,
    })
}

fn keys_for(params: &CkksParams, dir: Option<&Path>, seed: u64) -> Result<KeySet, Failure> {
    let ctx = CkksContext::new(params.clone())?;
    Ok(match dir {
        Some(d) => load_keys(&ctx, d)?,
        None => ctx.keygen(seed),
    })
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    p.as_deref()
        .ok_or_else(|| Failure::Usage(format!("--{flag} is required")))
}

fn dataset(p: &Option<PathBuf>, flag: &str) -> Result<Vec<Example>, Failure> {
    let path = need(p, flag)?;
    read_dataset(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn parse_ranks(text: &str) -> Result<Vec<(usize, usize)>, Failure> {
    text.split(',')
        .map(|pair| {
            let (a, b) = pair
                .trim()
                .split_once('x')
                .ok_or_else(|| Failure::Usage(format!("rank pair {pair:?} is not in×out")))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Failure::Usage(format!("rank {s:?}: {e}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

/// Model and projection, from checkpoints or trained on the buyer's data.
/// Freshly built artifacts are written next to the outputs so that
/// separately launched roles can share them.
fn model_and_projection(a: &ScoreArgs, train_set: Option<&[Example]>) -> Result<(Model, ProjectionOperator), Failure> {
    let model = match &a.model {
        Some(p) => deserialize_model(&fs::read(p)?)?,
        None => {
            let data = train_set.ok_or_else(|| Failure::Usage("--train or --model is required".into()))?;
            let d = data[0].features.len();
            let spec = ModelSpec {
                widths: vec![d, a.hidden, 1],
                activation: Activation::ReLU,
                head: Head::BinaryLogistic,
            };
            let tc = TrainConfig {
                lr: 0.02,
                epochs: 300,
                l2: 0.01,
                seed: a.common.seed,
                grad_tol: 1e-9,
            };
            let mut m = train(&spec, data, &tc)?;
            refit_head(&mut m, data, 1e-9)?;
            fs::create_dir_all(&a.common.out)?;
            fs::write(a.common.out.join("model.tipm"), serialize_model(&m))?;
            m
        }
    };
    let projection = match &a.projection {
        Some(p) => deserialize_projection(&fs::read(p)?)?,
        None => {
            let data = train_set.ok_or_else(|| Failure::Usage("--train or --projection is required".into()))?;
            let kfac = estimate_kfac(&model, data)?;
            let ranks = match &a.ranks {
                Some(r) => parse_ranks(r)?,
                None => {
                    let mut r = vec![(0, 0); model.layers.len()];
                    let last = model.layers.last().expect("model has layers");
                    *r.last_mut().unwrap() = (last.d_in() + 1, last.d_out());
                    r
                }
            };
            let p = build_projection(&kfac, &ranks)?;
            fs::create_dir_all(&a.common.out)?;
            fs::write(a.common.out.join("projection.tipp"), serialize_projection(&p))?;
            p
        }
    };
    projection.check_model(&model)?;
    Ok((model, projection))
}

fn buyer_config(
    a: &ScoreArgs,
    params: &CkksParams,
    model: &Model,
    projection: &ProjectionOperator,
    train_set: &[Example],
    eval: &[Example],
) -> Result<BuyerConfig, Failure> {
    let kfac = estimate_kfac(model, train_set)?;
    let mut cfg = BuyerConfig::from_model(params.clone(), model, eval, projection, &kfac, a.damping, a.common.seed)?;
    if let Some(dir) = &a.keys_dir {
        cfg.keys = Some(keys_for(params, Some(dir), a.common.seed)?);
    }
    Ok(cfg)
}

fn score(a: ScoreArgs) -> Result<(), Failure> {
    let params = load_params(a.common.params.as_deref())?;
    let timeout = std::time::Duration::from_secs(a.timeout);
    if let Some(role) = a.role {
        return score_role(&a, role, &params, timeout);
    }
    let train_set = dataset(&a.train, "train")?;
    let eval = dataset(&a.eval, "eval")?;
    let candidates = dataset(&a.seller, "seller")?;
    if candidates.is_empty() {
        return Err(ProtocolError::NoCandidates.into());
    }
    let (model, projection) = model_and_projection(&a, Some(&train_set))?;
    let cfg = buyer_config(&a, &params, &model, &projection, &train_set, &eval)?;
    let eval_vector = cfg.eval_vector.clone();
    let reference: Vec<f64> = candidates
        .iter()
        .map(|z| {
            Ok(utility_score(
                &eval_vector,
                &projected_gradient(&model, &projection, z)?,
            )?)
        })
        .collect::<Result<_, Failure>>()?;

    let utilities = match Mode::from(a.mode) {
        Mode::Plaintext => reference.clone(),
        Mode::Encrypted => {
            let seller = Seller::from_examples(
                params.clone(),
                model.clone(),
                projection.clone(),
                candidates,
                a.common.seed.wrapping_add(1),
            )?;
            let setup = Buyer::setup(cfg)?;
            let broker = Broker::new(params.clone())?;
            let report = match a.transport {
                Transport::Inproc => run_inproc(setup, seller, broker, false)?,
                Transport::Tcp => tcp::run_tcp_loopback(setup, seller, broker, timeout)?,
            };
            write_session_log(&a.common.out, &report)?;
            report.scores.utilities()
        }
    };
    write_scores(&a.common.out, &utilities, a.verify.then_some(reference.as_slice()))
}

fn write_session_log(out: &Path, report: &SessionReport) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    let log = SessionLog::from_events(report.log.clone());
    log.write_jsonl(fs::File::create(out.join("session_log.jsonl"))?)?;
    Ok(())
}

fn write_scores(out: &Path, utilities: &[f64], reference: Option<&[f64]>) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    let path = out.join("scores.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut header = vec!["index", "utility", "influence"];
    if reference.is_some() {
        header.extend(["plaintext_utility", "abs_error"]);
    }
    let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (i, &u) in utilities.iter().enumerate() {
        let mut row = vec![i.to_string(), output::fmt17(u), output::fmt17(-u)];
        if let Some(r) = reference {
            row.push(output::fmt17(r[i]));
            row.push(output::fmt17((u - r[i]).abs()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    println!("wrote {} scores to {}", utilities.len(), path.display());
    if let Some(r) = reference {
        let max_err = utilities.iter().zip(r).map(|(u, p)| (u - p).abs()).fold(0.0, f64::max);
        match market::pearson(utilities, r) {
            Ok(p) => println!("pearson {p:.6}"),
            Err(e) => println!("pearson n/a ({e})"),
        }
        println!("max_abs_error {max_err:.3e}");
    }
    Ok(())
}

/// One role of a TCP session. The broker listens; buyer and seller connect.
fn score_role(a: &ScoreArgs, role: RoleArg, params: &CkksParams, timeout: std::time::Duration) -> Result<(), Failure> {
    if a.transport != Transport::Tcp {
        return Err(Failure::Usage("--role needs --transport tcp".into()));
    }
    match role {
        RoleArg::Broker => {
            let addr = a.listen.ok_or_else(|| Failure::Usage("broker needs --listen".into()))?;
            let listener = TcpListener::bind(addr)?;
            eprintln!("broker listening on {}", listener.local_addr()?);
            let log = SessionLog::new();
            let broker = tcp::serve_broker(listener, Broker::new(params.clone())?, timeout, log.clone())?;
            fs::create_dir_all(&a.common.out)?;
            log.write_jsonl(fs::File::create(a.common.out.join("session_log.jsonl"))?)?;
            println!("scored {} candidates", broker.scored_count());
            Ok(())
        }
        RoleArg::Seller => {
            let addr = a
                .connect
                .ok_or_else(|| Failure::Usage("seller needs --connect".into()))?;
            let candidates = dataset(&a.seller, "seller")?;
            if candidates.is_empty() {
                return Err(ProtocolError::NoCandidates.into());
            }
            need(&a.model, "model")?;
            need(&a.projection, "projection")?;
            let (model, projection) = model_and_projection(a, None)?;
            let seller = Seller::from_examples(
                params.clone(),
                model,
                projection,
                candidates,
                a.common.seed.wrapping_add(1),
            )?;
            let seller = tcp::run_seller(addr, seller, timeout)?;
            println!("sent {} candidates", seller.candidate_count());
            Ok(())
        }
        RoleArg::Buyer => {
            let addr = a
                .connect
                .ok_or_else(|| Failure::Usage("buyer needs --connect".into()))?;
            let train_set = dataset(&a.train, "train")?;
            let eval = dataset(&a.eval, "eval")?;
            let (model, projection) = model_and_projection(a, Some(&train_set))?;
            let cfg = buyer_config(a, params, &model, &projection, &train_set, &eval)?;
            let buyer = tcp::run_buyer(addr, Buyer::setup(cfg)?, timeout)?;
            let scores = buyer.finalize()?;
            write_scores(&a.common.out, &scores.utilities(), None)
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        None => MarketConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            MarketConfig::from_json(&text)?
        }
    };
    cfg.seed = a.common.seed;
    let mode = Mode::from(a.mode);
    let params = load_params(a.common.params.as_deref())?;
    let keys = match mode {
        Mode::Encrypted => Some(keys_for(&params, a.keys_dir.as_deref(), cfg.seed)?),
        Mode::Plaintext => None,
    };
    let enc = keys.as_ref().map(|keys| EncryptedValuation { params: &params, keys });
    let run = market::simulate(&cfg, mode, enc.as_ref(), a.threads)?;
    output::write_market_outputs(&a.common.out, &run.results, &run.summary, &run.rank)?;
    print!("{}", run.summary.render_table());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let mut cfg = BenchConfig::desk(a.k, a.mode.into(), a.common.seed);
    cfg.params = load_params(a.common.params.as_deref())?;
    cfg.batch_sizes = a.batches.clone();
    if let Some(dir) = &a.keys_dir {
        cfg.keys = Some(keys_for(&cfg.params, Some(dir), a.common.seed)?);
    }
    log::info!(
        "bench runs on one thread (--threads {} ignored for timing stability)",
        a.threads
    );
    let rows = market::bench_overhead(&cfg)?;
    fs::create_dir_all(&a.common.out)?;
    output::write_timings(fs::File::create(a.common.out.join("timings.csv"))?, &rows)?;
    println!(
        "{:>10} {:>6} {:>22} {:>22} {:>22}",
        "batch", "k", "per_sample_plain_s", "per_sample_enc_s", "overhead_s"
    );
    for r in &rows {
        println!(
            "{:>10} {:>6} {:>22.6e} {:>22.6e} {:>22.6e}",
            r.batch_size, r.k, r.per_sample_plaintext, r.per_sample_encrypted, r.per_sample_overhead
        );
    }
    if cfg.mode == Mode::Encrypted {
        let spread = market::per_sample_spread(&rows);
        println!("per-sample spread {:.1}%", 100.0 * spread);
        if spread > 0.2 {
            eprintln!("warning: per-sample encrypted time varies by more than 20% across batch sizes");
        }
    }
    Ok(())
}
