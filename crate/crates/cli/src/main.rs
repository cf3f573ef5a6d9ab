use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use weakgraph::asymptotics::delta_diagnostics;
use weakgraph::error::Error;
use weakgraph::estimators::{estimate_graph, EstimateOptions, Method};
use weakgraph::harness::{run_coverage, ExperimentConfig};
use weakgraph::io::{export_graph, ingest_csv, to_json_string, write_csv, GraphFormat};
use weakgraph::linalg::{sample_covariance, DataMatrix};
use weakgraph::models::{sample, ModelSpec};

/// Confidence graphs for partial correlations, correlations and clusters.
#[derive(Debug, Parser)]
#[command(name = "weakgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a sample from a simulation model and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate a graph from a CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo coverage experiment.
    Coverage(CoverageArgs),
    /// Report delta-method accuracy diagnostics for a CSV file.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model family: dense, markov, sem, null, block or partial_markov.
    #[arg(long)]
    model: Option<String>,
    /// Number of features.
    #[arg(long = "D")]
    d: Option<usize>,
    /// Coupling strength.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    num_blocks: Option<usize>,
    #[arg(long)]
    within_corr: Option<f64>,
    #[arg(long)]
    num_edges: Option<usize>,
}

#[derive(Debug, Args)]
struct MethodArgs {
    /// delta, bootstrap, super, corr, cluster, restricted or finite.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Cluster count or conditioning-set size.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Null band half-width for correlation graphs.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Constant of the finite-sample band.
    #[arg(long)]
    c_alpha: Option<f64>,
    /// d_squared or offdiag_pairs.
    #[arg(long)]
    multiplicity: Option<String>,
    /// gaussian_plugin, empirical or finite_sample_literal.
    #[arg(long)]
    t_estimator: Option<String>,
    /// reuse_reps or uniform_sample.
    #[arg(long)]
    super_variant: Option<String>,
    #[arg(long)]
    uniform_draws: Option<usize>,
    /// one_minus_abs_corr or euclidean_on_standardized.
    #[arg(long)]
    distance_kind: Option<String>,
    /// Inner method of cluster graphs: delta, bootstrap or super_accurate.
    #[arg(long)]
    cluster_method: Option<String>,
    #[arg(long)]
    cluster_subgraphs: bool,
    #[arg(long)]
    budget_cap: Option<u64>,
    #[arg(long, env = "WEAKGRAPH_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Sample size.
    #[arg(long)]
    n: usize,
    #[arg(long, env = "WEAKGRAPH_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Dot,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// CSV file with one observation per line.
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    /// Experiment file: JSON mirroring the report's config, or key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// JSON report file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replicate CSV including runtimes.
    #[arg(long)]
    per_rep_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnosticsArgs {
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Precondition(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Precondition(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Precondition(m) => m,
        }
    }
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::SingularCovariance { .. } => None,
        Error::ZeroVariance { .. } => Some("remove constant columns"),
        Error::ClusterTooLarge { .. } => Some("use a smaller L"),
        Error::BudgetExceeded { .. } => Some("use a smaller L or raise --budget-cap"),
        Error::BandUndefined { .. } => Some("use the delta or bootstrap method, or the correlation graph"),
        _ => Some("use a high-dimensional method (correlation or cluster graph)"),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_precondition() {
            let msg = match hint(&e) {
                Some(h) => format!("{e}; {h}"),
                None => e.to_string(),
            };
            return Failure::Precondition(msg);
        }
        match e {
            Error::InvalidArgument(_) | Error::NotPositiveDefinite(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load_data(path: &Path) -> CliResult<DataMatrix> {
    ingest_csv(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Data(e.to_string()))
        }
    }
}

/// Where a setting lives inside the experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Top,
    Model,
    Options,
}

/// Flat configuration keys and their place in the nested configuration.
const KEYS: &[(&str, Slot, &str)] = &[
    ("model", Slot::Model, "kind"),
    ("D", Slot::Model, "D"),
    ("a", Slot::Model, "a"),
    ("num_blocks", Slot::Model, "num_blocks"),
    ("within_corr", Slot::Model, "within_corr"),
    ("num_edges", Slot::Model, "num_edges"),
    ("n", Slot::Top, "n"),
    ("alpha", Slot::Top, "alpha"),
    ("method", Slot::Top, "method"),
    ("reps", Slot::Top, "reps"),
    ("seed", Slot::Top, "seed"),
    ("B", Slot::Options, "B"),
    ("L", Slot::Options, "L"),
    ("epsilon", Slot::Options, "epsilon"),
    ("c_alpha", Slot::Options, "c_alpha"),
    ("multiplicity", Slot::Options, "multiplicity"),
    ("t_estimator", Slot::Options, "t_estimator"),
    ("super_variant", Slot::Options, "super_variant"),
    ("uniform_draws", Slot::Options, "uniform_draws"),
    ("distance_kind", Slot::Options, "distance_kind"),
    ("cluster_method", Slot::Options, "cluster_method"),
    ("cluster_subgraphs", Slot::Options, "cluster_subgraphs"),
    ("budget_cap", Slot::Options, "budget_cap"),
];

fn lookup_key(key: &str) -> CliResult<(Slot, &'static str)> {
    let key = key.trim().replace('-', "_");
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|&(_, slot, field)| (slot, field))
        .ok_or_else(|| usage(format!("unknown configuration key {key:?}")))
}

/// Settings collected from a key=value file and from flags, applied in order
/// over a JSON configuration.
#[derive(Debug, Default)]
struct Overlay(Vec<(Slot, &'static str, Value)>);

impl Overlay {
    fn set(&mut self, slot: Slot, field: &'static str, value: Option<Value>) {
        if let Some(v) = value {
            self.0.push((slot, field, v));
        }
    }

    fn apply(&self, root: &mut Map<String, Value>) -> CliResult<()> {
        for (slot, field, value) in &self.0 {
            let target = match slot {
                Slot::Top => &mut *root,
                Slot::Model => object_at(root, "model")?,
                Slot::Options => object_at(root, "options")?,
            };
            target.insert((*field).to_string(), value.clone());
        }
        Ok(())
    }

    fn model(&mut self, m: &ModelArgs) {
        self.set(Slot::Model, "kind", m.model.clone().map(Value::from));
        self.set(Slot::Model, "D", m.d.map(Value::from));
        self.set(Slot::Model, "a", m.a.map(Value::from));
        self.set(Slot::Model, "num_blocks", m.num_blocks.map(Value::from));
        self.set(Slot::Model, "within_corr", m.within_corr.map(Value::from));
        self.set(Slot::Model, "num_edges", m.num_edges.map(Value::from));
    }

    fn method(&mut self, m: &MethodArgs) {
        self.set(Slot::Top, "method", m.method.clone().map(Value::from));
        self.set(Slot::Top, "alpha", m.alpha.map(Value::from));
        self.set(Slot::Top, "seed", m.seed.map(Value::from));
        self.set(Slot::Options, "B", m.b.map(Value::from));
        self.set(Slot::Options, "L", m.l.map(Value::from));
        self.set(Slot::Options, "epsilon", m.epsilon.map(Value::from));
        self.set(Slot::Options, "c_alpha", m.c_alpha.map(Value::from));
        self.set(Slot::Options, "multiplicity", m.multiplicity.clone().map(Value::from));
        self.set(Slot::Options, "t_estimator", m.t_estimator.clone().map(Value::from));
        self.set(Slot::Options, "super_variant", m.super_variant.clone().map(Value::from));
        self.set(Slot::Options, "uniform_draws", m.uniform_draws.map(Value::from));
        self.set(Slot::Options, "distance_kind", m.distance_kind.clone().map(Value::from));
        self.set(
            Slot::Options,
            "cluster_method",
            m.cluster_method.clone().map(Value::from),
        );
        self.set(
            Slot::Options,
            "cluster_subgraphs",
            m.cluster_subgraphs.then_some(Value::Bool(true)),
        );
        self.set(Slot::Options, "budget_cap", m.budget_cap.map(Value::from));
    }
}

fn object_at<'a>(root: &'a mut Map<String, Value>, key: &str) -> CliResult<&'a mut Map<String, Value>> {
    root.entry(key)
        .or_insert_with(|| Value::Object(Map::new()))
        .as_object_mut()
        .ok_or_else(|| usage(format!("configuration field {key:?} must be an object")))
}

fn scalar(text: &str) -> Value {
    let t = text.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Value::from(v);
    }
    if let Ok(v) = t.parse::<f64>() {
        if v.is_finite() {
            return Value::from(v);
        }
    }
    match t {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::from(t),
    }
}

/// Reads a configuration file: a JSON object, or `key=value` lines with `#`
/// comments.
fn read_config(path: &Path) -> CliResult<(Map<String, Value>, Overlay)> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let root: Map<String, Value> =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        return Ok((root, Overlay::default()));
    }
    let mut overlay = Overlay::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), idx + 1)))?;
        let (slot, field) = lookup_key(key)?;
        overlay.set(slot, field, Some(scalar(value)));
    }
    Ok((Map::new(), overlay))
}

fn model_spec(m: &ModelArgs) -> CliResult<ModelSpec> {
    let mut overlay = Overlay::default();
    overlay.model(m);
    let mut root = Map::new();
    overlay.apply(&mut root)?;
    let model = root.remove("model").unwrap_or_else(|| Value::Object(Map::new()));
    let spec: ModelSpec = serde_json::from_value(model).map_err(|e| usage(format!("model: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let spec = model_spec(&args.model)?;
    let x = sample(&spec, args.n, args.seed)?;
    let mut buf = Vec::new();
    write_csv(&x, &mut buf)?;
    emit(args.out.as_deref(), &String::from_utf8_lossy(&buf))
}

fn estimate(args: EstimateArgs) -> CliResult<()> {
    let mut overlay = Overlay::default();
    overlay.method(&args.method);
    let mut root = Map::new();
    root.insert(
        "options".into(),
        serde_json::to_value(EstimateOptions::default()).expect("options serialize"),
    );
    overlay.apply(&mut root)?;
    let method: Method = match root.get("method") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| usage(format!("--method: {e}")))?,
        None => Method::Delta,
    };
    let alpha = root.get("alpha").and_then(Value::as_f64).unwrap_or(0.1);
    let mut opts: EstimateOptions =
        serde_json::from_value(root.remove("options").unwrap_or_default()).map_err(|e| usage(e.to_string()))?;
    opts.seed = root.get("seed").and_then(Value::as_u64).unwrap_or(0);

    let x = load_data(&args.input)?;
    let g = estimate_graph(&x, method, alpha, &opts)?;
    let format = match args.format {
        FormatArg::Json => GraphFormat::Json,
        FormatArg::Dot => GraphFormat::Dot,
    };
    let mut text = export_graph(&g, format);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn coverage_config(args: &CoverageArgs) -> CliResult<ExperimentConfig> {
    let (mut root, mut overlay) = match &args.config {
        Some(p) => read_config(p)?,
        None => (Map::new(), Overlay::default()),
    };
    overlay.model(&args.model);
    overlay.method(&args.method);
    overlay.set(Slot::Top, "n", args.n.map(Value::from));
    overlay.set(Slot::Top, "reps", args.reps.map(Value::from));
    overlay.apply(&mut root)?;
    object_at(&mut root, "model")?;
    let config: ExperimentConfig =
        serde_json::from_value(Value::Object(root)).map_err(|e| usage(format!("experiment configuration: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn coverage(args: CoverageArgs) -> CliResult<()> {
    let config = coverage_config(&args)?;
    let report = run_coverage(&config, args.workers)?;
    if let Some(p) = &args.per_rep_csv {
        let file = fs::File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
        report.write_rep_csv(file)?;
    }
    let json = to_json_string(&report) + "\n";
    match &args.out {
        Some(p) => {
            emit(Some(p), &json)?;
            emit(None, &report.summary_table())
        }
        None => {
            emit(None, &json)?;
            eprint!("{}", report.summary_table());
            Ok(())
        }
    }
}

fn diagnostics(args: DiagnosticsArgs) -> CliResult<()> {
    let x = load_data(&args.input)?;
    let d = delta_diagnostics(&sample_covariance(&x))?;
    emit(args.out.as_deref(), &(to_json_string(&d) + "\n"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Coverage(a) => coverage(a),
        Command::Diagnostics(a) => diagnostics(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
