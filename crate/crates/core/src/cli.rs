//! `privgsd` command line: `generate`, `eval` and `demo-sigmoid`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::{OsStr, OsString};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::{load_csv, save_csv, Dataset, DomainSchema, Normalization, NormalizationParams};
use crate::dp::{dp_to_zcdp, LedgerReport};
use crate::error::Error;
use crate::evalkit::{avg_error, max_error, per_workload_errors};
use crate::gsd::{CandidateStrategy, GenerationRecord, GsdConfig};
use crate::mechanisms::{self, EpochRecord, MechanismOptions, Remeasure, SelectionUnit};
use crate::queries::{
    gen_binary_tree_workloads, gen_categorical_marginal_workloads, gen_random_halfspaces, gen_random_prefixes,
    schema_digest, Workload, WorkloadManifest,
};
use crate::rng::{substream, tag};
use crate::sigmoid::{self, AnnealParams};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "PRIVGSD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "privgsd", version, about = "Private synthetic data with a genetic projection step")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Produce a private synthetic dataset.
    Generate(GenerateArgs),
    /// Compare a synthetic dataset against the original on a workload.
    Eval(EvalArgs),
    /// Contrast temperature-annealed descent with the genetic optimizer on a
    /// one-dimensional prefix query.
    DemoSigmoid(DemoArgs),
}

/// One workload family, e.g. `cat-marginals:k=2` or `binary-tree:k=2,levels=5`.
#[derive(Debug, Clone, PartialEq)]
pub enum QuerySpec {
    CatMarginals { k: usize },
    BinaryTree { k: usize, levels: u32 },
    Prefixes { m: usize },
    Halfspaces { m: usize },
}

impl fmt::Display for QuerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuerySpec::CatMarginals { k } => write!(f, "cat-marginals:k={k}"),
            QuerySpec::BinaryTree { k, levels } => write!(f, "binary-tree:k={k},levels={levels}"),
            QuerySpec::Prefixes { m } => write!(f, "prefixes:m={m}"),
            QuerySpec::Halfspaces { m } => write!(f, "halfspaces:m={m}"),
        }
    }
}

impl FromStr for QuerySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = Vec::new();
        for item in rest.split(',').filter(|t| !t.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{item}`"))?;
            params.push((key.trim(), value.trim()));
        }
        let take = |key: &str| -> Result<&str, String> {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| format!("`{family}` needs `{key}=`"))
        };
        let num = |key: &str| -> Result<usize, String> {
            take(key)?
                .parse()
                .map_err(|_| format!("`{key}` must be a nonnegative integer"))
        };
        let allowed: &[&str] = match family {
            "cat-marginals" => &["k"],
            "binary-tree" => &["k", "levels"],
            "prefixes" | "halfspaces" => &["m"],
            other => {
                return Err(format!(
                    "unknown query family `{other}` (expected cat-marginals, binary-tree, prefixes or halfspaces)"
                ))
            }
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(format!("`{family}` does not take `{k}`"));
        }
        Ok(match family {
            "cat-marginals" => QuerySpec::CatMarginals { k: num("k")? },
            "binary-tree" => QuerySpec::BinaryTree {
                k: num("k")?,
                levels: u32::try_from(num("levels")?).map_err(|_| "`levels` is too large".to_string())?,
            },
            "prefixes" => QuerySpec::Prefixes { m: num("m")? },
            _ => QuerySpec::Halfspaces { m: num("m")? },
        })
    }
}

/// Expand specs into workloads. Random families draw from a stream keyed by
/// the seed and the spec's position in the list.
pub fn build_workloads(schema: &DomainSchema, specs: &[QuerySpec], seed: u64) -> crate::Result<Vec<Workload>> {
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let mut rng = substream(seed, &[tag::WORKLOAD, i as u64]);
        match *spec {
            QuerySpec::CatMarginals { k } => out.extend(gen_categorical_marginal_workloads(schema, k)?),
            QuerySpec::BinaryTree { k, levels } => out.extend(gen_binary_tree_workloads(schema, k, levels)?),
            QuerySpec::Prefixes { m } => out.push(gen_random_prefixes(schema, m, &mut rng)?),
            QuerySpec::Halfspaces { m } => out.push(gen_random_halfspaces(schema, m, &mut rng)?),
        }
    }
    if out.is_empty() {
        return Err(Error::param("query specs produced no workloads"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Oneshot,
    Adaptive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Incumbent,
    EliteRowCrossover,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectionArg {
    Workload,
    Query,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RemeasureArg {
    Concatenate,
    Replace,
}

#[derive(Debug, Args)]
struct GsdArgs {
    /// JSON file with optimizer settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic rows N'.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    p_mut: Option<usize>,
    #[arg(long)]
    p_cross: Option<usize>,
    #[arg(long)]
    elite_size: Option<usize>,
    #[arg(long)]
    mutation_rate: Option<usize>,
    #[arg(long)]
    crossover_rate: Option<usize>,
    #[arg(long)]
    early_stop_threshold: Option<f64>,
    #[arg(long)]
    early_stop_window: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
}

impl GsdArgs {
    fn resolve(&self, seed: u64) -> Result<GsdConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = read_input(path, "config")?;
                serde_json::from_str::<GsdConfig>(&text)
                    .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?
            }
            None => GsdConfig::default(),
        };
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.synthetic_rows, self.rows);
        set(&mut cfg.max_generations, self.generations);
        set(&mut cfg.p_mut, self.p_mut);
        set(&mut cfg.p_cross, self.p_cross);
        set(&mut cfg.elite_size, self.elite_size);
        set(&mut cfg.mutation_rate, self.mutation_rate);
        set(&mut cfg.crossover_rate, self.crossover_rate);
        if let Some(t) = self.early_stop_threshold {
            cfg.early_stop_threshold = t;
        }
        if let Some(w) = self.early_stop_window {
            cfg.early_stop_window = Some(w);
        }
        if let Some(s) = self.strategy {
            cfg.strategy = match s {
                StrategyArg::Incumbent => CandidateStrategy::Incumbent,
                StrategyArg::EliteRowCrossover => CandidateStrategy::EliteRowCrossover,
            };
        }
        cfg.seed = seed;
        cfg.validate().map_err(|e| Failure::usage(format!("optimizer settings: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Workload family; repeat for several.
    #[arg(long = "queries", required = true)]
    queries: Vec<QuerySpec>,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
    /// zCDP budget.
    #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
    rho: Option<f64>,
    /// (ε, δ) budget, converted to ρ.
    #[arg(long)]
    epsilon: Option<f64>,
    /// δ for the (ε, δ) guarantee.
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Adaptive epochs.
    #[arg(long = "T", default_value_t = 25)]
    epochs: usize,
    /// Selections per adaptive epoch.
    #[arg(long = "S", default_value_t = 1)]
    samples: usize,
    #[arg(long, value_enum, default_value = "workload")]
    selection: SelectionArg,
    #[arg(long, value_enum, default_value = "concatenate")]
    remeasure: RemeasureArg,
    /// Output CSV; the run manifest and workload manifest are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,
    /// Also write per-generation optimizer traces as JSON lines.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    gsd: GsdArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long = "queries", conflicts_with = "workload_manifest", required_unless_present = "workload_manifest")]
    queries: Vec<QuerySpec>,
    /// Workload manifest written by `generate`.
    #[arg(long)]
    workload_manifest: Option<PathBuf>,
    /// Seed for random query families given with --queries.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,
    /// Print one line per workload.
    #[arg(long)]
    per_workload: bool,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Comma-separated inverse temperatures, in order.
    #[arg(long, value_delimiter = ',')]
    temps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Descent steps per temperature.
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn stage(stage: &str, err: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: format!("{stage}: {err}"),
        }
    }
}

fn read_input(path: &Path, what: &str) -> Result<String, Failure> {
    if !path.is_file() {
        return Err(Failure::usage(format!("{what} file not found: {}", path.display())));
    }
    std::fs::read_to_string(path).map_err(|e| Failure::stage(&format!("read {what}"), e))
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{what} file not found: {}", path.display())))
    }
}

fn load_schema(path: &Path) -> Result<Arc<DomainSchema>, Failure> {
    let text = read_input(path, "schema")?;
    DomainSchema::from_json(&text)
        .map(Arc::new)
        .map_err(|e| Failure::stage(&format!("load schema {}", path.display()), e))
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::stage("thread pool", e))?;
    Ok(pool.install(f))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(OsStr::to_string_lossy).unwrap_or_default().into_owned()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::stage(&format!("write {}", path.display()), e))
}

#[derive(Serialize)]
struct ErrorSummary {
    max_error: f64,
    avg_error: f64,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    mode: &'static str,
    queries: Vec<String>,
    seed: u64,
    epochs: Option<usize>,
    samples: Option<usize>,
    options: &'a MechanismOptions,
    config: &'a GsdConfig,
    schema_digest: String,
    workload_manifest: String,
    workload_manifest_sha256: String,
    synthetic_sha256: String,
    normalization: &'a NormalizationParams,
    ledger: LedgerReport,
    rounds: &'a [EpochRecord],
    errors: ErrorSummary,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    epoch: usize,
    #[serde(flatten)]
    record: &'a GenerationRecord,
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    require_file(&args.data, "data")?;
    let schema = load_schema(&args.schema)?;
    let config = args.gsd.resolve(args.seed)?;
    let rho = match (args.rho, args.epsilon) {
        (Some(r), _) => r,
        (None, Some(eps)) => dp_to_zcdp(eps, args.delta).map_err(|e| Failure::usage(format!("--epsilon: {e}")))?,
        (None, None) => return Err(Failure::usage("one of --rho or --epsilon is required")),
    };
    let options = MechanismOptions {
        selection: match args.selection {
            SelectionArg::Workload => SelectionUnit::Workload,
            SelectionArg::Query => SelectionUnit::Query,
        },
        remeasure: match args.remeasure {
            RemeasureArg::Concatenate => Remeasure::Concatenate,
            RemeasureArg::Replace => Remeasure::Replace,
        },
        delta: args.delta,
        keep_trace: args.trace,
    };

    let (data, params) = load_csv(&args.data, schema.clone(), Normalization::Observed)
        .map_err(|e| Failure::stage("load data", e))?;
    let workloads = build_workloads(&schema, &args.queries, args.seed).map_err(|e| Failure::stage("build workloads", e))?;

    let output = with_pool(args.threads, || match args.mode {
        Mode::Oneshot => mechanisms::one_shot(&data, &workloads, rho, &config, &options),
        Mode::Adaptive => mechanisms::adaptive(&data, &workloads, rho, args.epochs, args.samples, &config, &options),
    })?
    .map_err(|e| Failure::stage("mechanism", e))?;

    save_csv(&output.synthetic, &args.out, Some(&params)).map_err(|e| Failure::stage("write synthetic data", e))?;

    // Score what was written, so `eval` on the same files reproduces the numbers.
    let (written, _) = load_csv(&args.out, schema.clone(), Normalization::Fixed(params.clone()))
        .map_err(|e| Failure::stage("reload synthetic data", e))?;
    let errors = with_pool(args.threads, || score(&workloads, &data, &written))?
        .map_err(|e| Failure::stage("evaluate", e))?;

    let wm_path = sibling(&args.out, ".workloads.json");
    let wm_json = WorkloadManifest::build(&schema, &workloads)
        .map_err(|e| Failure::stage("workload manifest", e))?
        .to_json();
    write_file(&wm_path, wm_json.as_bytes())?;

    let csv_bytes = std::fs::read(&args.out).map_err(|e| Failure::stage("reread synthetic data", e))?;
    let ledger = output.ledger.report();
    let manifest = RunManifest {
        mode: match args.mode {
            Mode::Oneshot => "oneshot",
            Mode::Adaptive => "adaptive",
        },
        queries: args.queries.iter().map(ToString::to_string).collect(),
        seed: args.seed,
        epochs: matches!(args.mode, Mode::Adaptive).then_some(args.epochs),
        samples: matches!(args.mode, Mode::Adaptive).then_some(args.samples),
        options: &options,
        config: &config,
        schema_digest: schema_digest(&schema),
        workload_manifest: file_name(&wm_path),
        workload_manifest_sha256: sha256_hex(wm_json.as_bytes()),
        synthetic_sha256: sha256_hex(&csv_bytes),
        normalization: &params,
        ledger: ledger.clone(),
        rounds: &strip_traces(&output.epochs),
        errors: ErrorSummary {
            max_error: errors.0,
            avg_error: errors.1,
        },
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::stage("run manifest", e))?;
    write_file(&sibling(&args.out, ".manifest.json"), manifest_json.as_bytes())?;

    if args.trace {
        let mut lines = String::new();
        for ep in &output.epochs {
            for record in &ep.trace {
                let line = serde_json::to_string(&TraceLine { epoch: ep.epoch, record })
                    .map_err(|e| Failure::stage("trace", e))?;
                lines.push_str(&line);
                lines.push('\n');
            }
        }
        write_file(&sibling(&args.out, ".trace.jsonl"), lines.as_bytes())?;
    }

    println!(
        "privacy: rho_spent={} of {} epsilon={} delta={} ({} ledger entries)",
        ledger.spent_rho,
        ledger.total_rho,
        ledger.epsilon,
        ledger.delta,
        ledger.entries.len()
    );
    println!("max_error {}", errors.0);
    println!("avg_error {}", errors.1);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn strip_traces(epochs: &[EpochRecord]) -> Vec<EpochRecord> {
    epochs
        .iter()
        .map(|e| EpochRecord {
            trace: Vec::new(),
            ..e.clone()
        })
        .collect()
}

fn score(workloads: &[Workload], original: &Dataset, synthetic: &Dataset) -> crate::Result<(f64, f64)> {
    Ok((
        max_error(workloads, original, synthetic)?,
        avg_error(workloads, original, synthetic)?,
    ))
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    require_file(&args.original, "original data")?;
    require_file(&args.synthetic, "synthetic data")?;
    let schema = load_schema(&args.schema)?;
    let workloads = match &args.workload_manifest {
        Some(path) => {
            let text = read_input(path, "workload manifest")?;
            WorkloadManifest::from_json(&text)
                .and_then(|m| m.resolve(&schema))
                .map_err(|e| Failure::stage(&format!("workload manifest {}", path.display()), e))?
        }
        None => build_workloads(&schema, &args.queries, args.seed).map_err(|e| Failure::stage("build workloads", e))?,
    };
    let (original, params) = load_csv(&args.original, schema.clone(), Normalization::Observed)
        .map_err(|e| Failure::stage("load original data", e))?;
    let (synthetic, _) = load_csv(&args.synthetic, schema, Normalization::Fixed(params))
        .map_err(|e| Failure::stage("load synthetic data", e))?;

    let (errors, table) = with_pool(args.threads, || -> crate::Result<_> {
        let errors = score(&workloads, &original, &synthetic)?;
        let table = if args.per_workload {
            per_workload_errors(&workloads, &original, &synthetic)?
        } else {
            Vec::new()
        };
        Ok((errors, table))
    })?
    .map_err(|e| Failure::stage("evaluate", e))?;

    println!("max_error {}", errors.0);
    println!("avg_error {}", errors.1);
    if args.per_workload {
        let width = table.iter().map(|(n, _, _)| n.len()).max().unwrap_or(8).max(8);
        println!("{:<width$}  {:>12}  {:>12}", "workload", "max", "avg");
        for (name, max, avg) in &table {
            println!("{name:<width$}  {max:>12.6}  {avg:>12.6}");
        }
    }
    Ok(())
}

fn cmd_demo_sigmoid(args: DemoArgs) -> Result<(), Failure> {
    let defaults = AnnealParams::default();
    let params = AnnealParams {
        temperatures: args.temps.unwrap_or(defaults.temperatures.clone()),
        learning_rate: args.lr,
        max_steps: args.max_steps,
        ..defaults
    };
    let config = GsdConfig {
        seed: args.seed,
        ..GsdConfig::default()
    };
    let report = sigmoid::run_demo(args.n, &params, &config).map_err(|e| Failure::stage("demo", e))?;
    let last = params.temperatures.last().copied().unwrap_or_default();
    println!(
        "annealed descent: surrogate_loss={:e} at inverse temperature {last}, true prefix error={}",
        report.annealed_surrogate_loss, report.annealed_true_error
    );
    println!("genetic optimizer: true prefix error={}", report.gsd_true_error);
    Ok(())
}

/// Run the command line with `args` (including the program name) and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, result) = match cli.command {
        Command::Generate(a) => ("generate", cmd_generate(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::DemoSigmoid(a) => ("demo-sigmoid", cmd_demo_sigmoid(a)),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("privgsd {name}: {}", f.message);
            f.code
        }
    }
}
