//! Command-line interface.
//!
//! Exit codes: 0 success, 1 invalid data or a failed run, 2 usage errors.

mod io;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data_model::{load_and_validate, ExperimentPanel, ValidationReport};
use crate::pareto::{binned_search, default_bins, random_search, ParetoResult, DEFAULT_BIN_EDGES, DEFAULT_CAPACITY};
use crate::proxy::{evaluate_objectives, ObjectiveConfig, ObjectiveKind, ProxyEvaluator, WeightVector};
use crate::scoring::{
    labels_for, neutral_ns_breakdown, north_star_summaries, proxy_summaries, score, score_metric, NeutralBreakdown,
    ScoreReport,
};
use crate::simulator::{preset, simulate_panel, SimConfig};
use crate::stats::{sensitivity_report, IqrClamp, SensitivityConfig};
use io::{digest, emit, sibling_registry, unwrap_result, write_atomic, Artifact, InputDigest};

pub use io::write_atomic as write_file_atomic;

#[derive(Debug, Parser)]
#[command(name = "proxyforge", version, about = "Find sensitive, directionally faithful proxy metrics")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PROXYFORGE_THREADS")]
    threads: Option<usize>,
    /// Significance level of the two-sided t-tests.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Algorithm {
    Random,
    Binned,
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// Panel CSV (arm-level or delta-level).
    #[arg(long)]
    data: PathBuf,
    /// Metric registry CSV (default: `<data stem>.registry.csv`).
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Restrict to these candidate metrics.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a panel and report every problem found.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-metric sensitivity and directionality.
    Sensitivity {
        #[command(flatten)]
        data: DataArgs,
        /// Clamp t-statistics at this many IQRs beyond the quartiles.
        #[arg(long)]
        clamp: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Objectives of one weighted proxy.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// JSON array of weights, or an object mapping metric id to weight.
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "bs-corr")]
        objectives: ObjectiveKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for the Pareto front of proxies.
    Optimize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Algorithm::Binned)]
        algorithm: Algorithm,
        /// Random draws in total (default 4000 per metric) or evaluations per bin (default 4000).
        #[arg(long)]
        iterations: Option<u64>,
        /// Number of sensitivity bin edges.
        #[arg(long, default_value_t = DEFAULT_BIN_EDGES)]
        bins: usize,
        #[arg(long, default_value = "bs-corr")]
        objectives: ObjectiveKind,
        #[arg(long, default_value_t = DEFAULT_CAPACITY)]
        capacity: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the front as CSV.
        #[arg(long)]
        front_csv: Option<PathBuf>,
    },
    /// Contingency table and proxy score of a proxy against the north star.
    Score {
        #[command(flatten)]
        data: DataArgs,
        /// Front produced by `optimize`.
        #[arg(long, conflicts_with = "weights")]
        front: Option<PathBuf>,
        /// Front entry to score (default: the one with the highest proxy score).
        #[arg(long, requires = "front")]
        entry: Option<usize>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the 3×3 contingency counts as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Generate a synthetic panel with known effects.
    Simulate {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        /// Full generative configuration as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Experiments.
        #[arg(long = "J", alias = "experiments", default_value_t = 300)]
        experiments: usize,
        /// Buckets per experiment.
        #[arg(long = "N", alias = "buckets", default_value_t = 100)]
        buckets: usize,
        /// Candidate metrics.
        #[arg(long = "M", alias = "num-metrics", default_value_t = 10)]
        metrics: usize,
        /// Panel CSV; the registry is written beside it.
        #[arg(long)]
        out: PathBuf,
        /// True effects CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Area under a front.
    Aupf {
        #[arg(long)]
        front: PathBuf,
        /// Reference point `sensitivity,directionality`.
        #[arg(long, default_value = "0,0")]
        reference: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot-ready CSV of a front (`--front`) or of per-metric sensitivity (`--data`).
    PlotData {
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        front: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        registry: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(Box<ValidationReport>),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn run_err<E: std::error::Error + Send + Sync + 'static>(e: E) -> Failure {
    Failure::Run(e.into())
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: proxyforge <COMMAND> [OPTIONS] (see --help)");
            2
        }
        Err(Failure::Invalid(report)) => {
            eprintln!("error: the panel failed validation");
            eprintln!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if !(cli.alpha > 0.0 && cli.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", cli.alpha)));
    }
    if cli.format == Format::Csv && !matches!(cli.command, Command::Sensitivity { .. } | Command::Validate { .. }) {
        return Err(usage("--format csv applies to `sensitivity` and `validate`; other commands write CSV through their own flags"));
    }
    match &cli.command {
        Command::Validate { data, out } => validate(cli, data, out.as_deref()),
        Command::Sensitivity { data, clamp, out } => sensitivity(cli, data, *clamp, out.as_deref()),
        Command::Evaluate {
            data,
            weights,
            objectives,
            out,
        } => evaluate(cli, data, weights, *objectives, out.as_deref()),
        Command::Optimize { .. } => optimize(cli),
        Command::Score {
            data,
            front,
            entry,
            weights,
            out,
            table,
        } => score_cmd(cli, data, front.as_deref(), *entry, weights.as_deref(), out.as_deref(), table.as_deref()),
        Command::Simulate { .. } => simulate(cli),
        Command::Aupf { front, reference, out } => aupf(front, reference, out.as_deref()),
        Command::PlotData {
            front,
            data,
            registry,
            out,
        } => plot_data(cli, front.as_deref(), data.as_deref(), registry.as_deref(), out.as_deref()),
    }
}

struct Loaded {
    panel: ExperimentPanel,
    inputs: Vec<InputDigest>,
    registry: PathBuf,
}

fn registry_path(data: &DataArgs) -> PathBuf {
    data.registry.clone().unwrap_or_else(|| sibling_registry(&data.data))
}

fn load_report(data: &DataArgs) -> Result<(Option<ExperimentPanel>, ValidationReport, Vec<InputDigest>, PathBuf), Failure> {
    let registry = registry_path(data);
    let inputs = vec![digest(&data.data)?, digest(&registry)?];
    let (panel, report) = load_and_validate(&data.data, &registry).map_err(run_err)?;
    Ok((panel, report, inputs, registry))
}

fn load(data: &DataArgs) -> Result<Loaded, Failure> {
    let (panel, report, inputs, registry) = load_report(data)?;
    let panel = match panel {
        Some(p) if report.is_ok() => p,
        _ => return Err(Failure::Invalid(Box::new(report))),
    };
    let panel = match &data.metrics {
        Some(ids) => panel.select_metrics(ids).map_err(|e| usage(e.to_string()))?,
        None => panel,
    };
    Ok(Loaded {
        panel,
        inputs,
        registry,
    })
}

fn data_config(data: &DataArgs, registry: &Path) -> Value {
    json!({
        "data": data.data.display().to_string(),
        "registry": registry.display().to_string(),
        "metrics": data.metrics,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut base, extra) {
        a.extend(b);
    }
    base
}

fn write_artifact<T: Serialize>(command: &str, config: Value, inputs: Vec<InputDigest>, result: T, out: Option<&Path>) -> Outcome {
    let text = Artifact::new(command, config, inputs, result).to_json()?;
    emit(out, text.as_bytes())?;
    Ok(())
}

fn csv_bytes<F>(write: F) -> anyhow::Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn validate(cli: &Cli, data: &DataArgs, out: Option<&Path>) -> Outcome {
    let (_, report, inputs, registry) = load_report(data)?;
    if cli.format == Format::Csv {
        let bytes = csv_bytes(|w| {
            w.write_record(["severity", "code", "experiment_id", "metric_id", "message"])?;
            for (severity, issues) in [("error", &report.errors), ("warning", &report.warnings)] {
                for i in issues.iter() {
                    let code = serde_json::to_value(i.code).ok().and_then(|v| v.as_str().map(str::to_string));
                    w.write_record([
                        severity,
                        code.as_deref().unwrap_or(""),
                        i.experiment_id.as_deref().unwrap_or(""),
                        i.metric_id.as_deref().unwrap_or(""),
                        &i.message,
                    ])?;
                }
            }
            Ok(())
        })?;
        emit(out, &bytes)?;
    } else {
        write_artifact("validate", data_config(data, &registry), inputs, &report, out)?;
    }
    if report.is_ok() {
        Ok(())
    } else {
        eprintln!("{} validation error(s)", report.errors.len());
        Err(Failure::Run(anyhow!("validation failed")))
    }
}

fn sensitivity(cli: &Cli, data: &DataArgs, clamp: Option<f64>, out: Option<&Path>) -> Outcome {
    let loaded = load(data)?;
    let cfg = SensitivityConfig {
        alpha: cli.alpha,
        clamp: clamp.map(|multiplier| IqrClamp { multiplier }),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let rows = sensitivity_report(&loaded.panel, &cfg).map_err(run_err)?;
    if cli.format == Format::Csv {
        let bytes = csv_bytes(|w| {
            for r in &rows {
                w.serialize(r)?;
            }
            Ok(())
        })?;
        emit(out, &bytes)?;
        return Ok(());
    }
    let config = merge(data_config(data, &loaded.registry), json!({"alpha": cli.alpha, "clamp": clamp}));
    write_artifact("sensitivity", config, loaded.inputs, &rows, out)
}

/// Reads weights as a JSON array aligned with `ids` or an object keyed by id
/// (missing ids get weight 0).
fn read_weights(path: &Path, ids: &[String]) -> Result<WeightVector, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    weights_from_json(&unwrap_result(doc), ids)
}

fn weights_from_json(doc: &Value, ids: &[String]) -> Result<WeightVector, Failure> {
    let raw: Vec<f64> = match doc {
        Value::Array(items) => {
            if items.len() != ids.len() {
                return Err(usage(format!("{} weights for {} metrics", items.len(), ids.len())));
            }
            items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| usage(format!("weight {v} is not a number"))))
                .collect::<Result<_, _>>()?
        }
        Value::Object(map) => {
            let mut w = vec![0.0; ids.len()];
            for (id, v) in map {
                let k = ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| usage(format!("weights name unknown metric `{id}`")))?;
                w[k] = v.as_f64().ok_or_else(|| usage(format!("weight for `{id}` is not a number")))?;
            }
            w
        }
        _ => return Err(usage("weights must be a JSON array or object")),
    };
    WeightVector::new(raw).map_err(|e| usage(e.to_string()))
}

fn evaluate(cli: &Cli, data: &DataArgs, weights: &Path, kind: ObjectiveKind, out: Option<&Path>) -> Outcome {
    let mut loaded = load(data)?;
    loaded.inputs.push(digest(weights)?);
    let ids = loaded.panel.metric_ids().to_vec();
    let w = read_weights(weights, &ids)?;
    let cfg = ObjectiveConfig {
        kind,
        alpha: cli.alpha,
        ..Default::default()
    };
    let point = evaluate_objectives(&loaded.panel, &w, &cfg).map_err(run_err)?;
    let config = merge(
        data_config(data, &loaded.registry),
        json!({"alpha": cli.alpha, "objectives": kind.to_string(), "weights": weights.display().to_string()}),
    );
    let result = json!({
        "metric_ids": ids,
        "weights": w.normalized(),
        "sensitivity": point.sensitivity,
        "directionality": point.directionality,
    });
    write_artifact("evaluate", config, loaded.inputs, result, out)
}

fn front_csv(front: &ParetoResult) -> anyhow::Result<Vec<u8>> {
    csv_bytes(|w| {
        let mut header = vec!["sensitivity".to_string(), "directionality".to_string()];
        header.extend(front.metric_ids.iter().map(|id| format!("weight_{id}")));
        w.write_record(&header)?;
        let mut entries: Vec<_> = front.entries.iter().collect();
        entries.sort_by(|a, b| a.sensitivity.total_cmp(&b.sensitivity));
        for e in entries {
            let total: f64 = e.weights.iter().sum();
            let mut rec = vec![e.sensitivity.to_string(), e.directionality.to_string()];
            rec.extend(e.weights.iter().map(|v| (v / total).to_string()));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn optimize(cli: &Cli) -> Outcome {
    let Command::Optimize {
        data,
        algorithm,
        iterations,
        bins,
        objectives,
        capacity,
        out,
        front_csv: csv_out,
    } = &cli.command
    else {
        unreachable!()
    };
    if *capacity < 2 {
        return Err(usage("--capacity must be at least 2"));
    }
    let loaded = load(data)?;
    let ids = loaded.panel.metric_ids().to_vec();
    let cfg = ObjectiveConfig {
        kind: *objectives,
        alpha: cli.alpha,
        ..Default::default()
    };
    let ev = ProxyEvaluator::new(&loaded.panel, cfg).map_err(run_err)?;
    let seed = cli.seed.unwrap_or(0);
    let (iterations, result) = match algorithm {
        Algorithm::Random => {
            let draws = iterations.unwrap_or(4000 * ids.len() as u64);
            (draws, random_search(&ev, &ids, draws, seed, *capacity).map_err(run_err)?)
        }
        Algorithm::Binned => {
            let budget = iterations.unwrap_or(4000);
            let spec = default_bins(&ev, *bins).map_err(run_err)?;
            let budget = usize::try_from(budget).map_err(|_| usage("--iterations too large"))?;
            (budget as u64, binned_search(&ev, &ids, &spec, budget).map_err(run_err)?)
        }
    };
    if let Some(p) = csv_out {
        write_atomic(p, &front_csv(&result)?)?;
    }
    let config = merge(
        data_config(data, &loaded.registry),
        json!({
            "algorithm": algorithm,
            "objectives": objectives.to_string(),
            "alpha": cli.alpha,
            "seed": seed,
            "iterations": iterations,
            "bins": bins,
            "capacity": capacity,
        }),
    );
    write_artifact("optimize", config, loaded.inputs, &result, out.as_deref())
}

fn read_front(path: &Path) -> Result<ParetoResult, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(serde_json::from_value(unwrap_result(doc)).with_context(|| format!("{} is not a front", path.display()))?)
}

/// Front entry weights re-indexed to the panel's metrics.
fn entry_weights(front: &ParetoResult, entry: usize, ids: &[String]) -> Result<WeightVector, Failure> {
    let e = front
        .entries
        .get(entry)
        .ok_or_else(|| usage(format!("front has {} entries, no entry {entry}", front.entries.len())))?;
    let map: serde_json::Map<String, Value> = front
        .metric_ids
        .iter()
        .cloned()
        .zip(e.weights.iter().map(|&w| json!(w)))
        .collect();
    weights_from_json(&Value::Object(map), ids)
}

#[derive(Debug, Serialize)]
struct ScoreResult {
    metric_ids: Vec<String>,
    weights: WeightVector,
    entry: Option<usize>,
    report: ScoreReport,
    neutral_north_star: NeutralBreakdown,
    short_term_north_star: Option<ScoreReport>,
}

#[allow(clippy::too_many_arguments)]
fn score_cmd(
    cli: &Cli,
    data: &DataArgs,
    front: Option<&Path>,
    entry: Option<usize>,
    weights: Option<&Path>,
    out: Option<&Path>,
    table: Option<&Path>,
) -> Outcome {
    let mut loaded = load(data)?;
    let panel = &loaded.panel;
    let ids = panel.metric_ids().to_vec();
    let ns = north_star_summaries(panel, cli.alpha);
    let labels_of = |w: &WeightVector| -> Result<_, Failure> {
        let proxy = proxy_summaries(panel, w, cli.alpha).map_err(run_err)?;
        Ok(labels_for(&proxy, &ns))
    };
    let (w, chosen) = match (front, weights) {
        (Some(path), None) => {
            loaded.inputs.push(digest(path)?);
            let front = read_front(path)?;
            match entry {
                Some(k) => (entry_weights(&front, k, &ids)?, Some(k)),
                None => {
                    let mut best: Option<(f64, usize, WeightVector)> = None;
                    for k in 0..front.entries.len() {
                        let w = entry_weights(&front, k, &ids)?;
                        let s = score(&labels_of(&w)?).map_err(run_err)?.proxy_score.unwrap_or(f64::NEG_INFINITY);
                        if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                            best = Some((s, k, w));
                        }
                    }
                    let (_, k, w) = best.ok_or_else(|| Failure::Run(anyhow!("front has no entries")))?;
                    (w, Some(k))
                }
            }
        }
        (None, Some(path)) => {
            loaded.inputs.push(digest(path)?);
            (read_weights(path, &ids)?, None)
        }
        _ => return Err(usage("score needs --front or --weights")),
    };
    let labels = labels_of(&w)?;
    let report = score(&labels).map_err(run_err)?;
    let y_means: Vec<f64> = ns.iter().map(|s| s.mean).collect();
    let neutral = neutral_ns_breakdown(&labels, &y_means).map_err(run_err)?;
    let short = match panel.registry().north_star_short() {
        Some(e) if panel.metric_index(&e.metric_id).is_some() => {
            Some(score_metric(panel, &e.metric_id, cli.alpha).map_err(run_err)?)
        }
        _ => None,
    };
    if let Some(p) = table {
        let mut buf = Vec::new();
        report.table.write_csv(&mut buf).map_err(run_err)?;
        write_atomic(p, &buf)?;
    }
    let config = merge(
        data_config(data, &loaded.registry),
        json!({
            "alpha": cli.alpha,
            "front": front.map(|p| p.display().to_string()),
            "entry": chosen,
            "weights": weights.map(|p| p.display().to_string()),
        }),
    );
    let result = ScoreResult {
        metric_ids: ids,
        weights: w.normalized(),
        entry: chosen,
        report,
        neutral_north_star: neutral,
        short_term_north_star: short,
    };
    write_artifact("score", config, loaded.inputs, &result, out)
}

fn simulate(cli: &Cli) -> Outcome {
    let Command::Simulate {
        preset: name,
        config,
        experiments,
        buckets,
        metrics,
        out,
        truth,
    } = &cli.command
    else {
        unreachable!()
    };
    let mut inputs = Vec::new();
    let cfg = match (name, config) {
        (Some(name), None) => preset(name, *experiments, *buckets, *metrics, cli.seed.unwrap_or(0))
            .map_err(|e| usage(e.to_string()))?,
        (None, Some(path)) => {
            inputs.push(digest(path)?);
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: SimConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cfg
        }
        _ => return Err(usage("simulate needs --preset or --config")),
    };
    let (panel, gt) = simulate_panel(&cfg).map_err(run_err)?;
    let registry = sibling_registry(out);
    let mut buf = Vec::new();
    panel.write_delta_csv(&mut buf).map_err(run_err)?;
    write_atomic(out, &buf)?;
    let mut buf = Vec::new();
    panel.registry().write_csv(&mut buf).map_err(run_err)?;
    write_atomic(&registry, &buf)?;
    if let Some(p) = truth {
        let mut buf = Vec::new();
        gt.write_csv(&mut buf).map_err(run_err)?;
        write_atomic(p, &buf)?;
    }
    let mut outputs = BTreeMap::new();
    outputs.insert("panel", out.display().to_string());
    outputs.insert("registry", registry.display().to_string());
    if let Some(p) = truth {
        outputs.insert("truth", p.display().to_string());
    }
    let config = json!({"simulation": cfg, "outputs": outputs});
    write_artifact("simulate", config, inputs, panel.shape(), None)
}

fn parse_reference(s: &str) -> Result<[f64; 2], Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => Ok([x, y]),
            _ => Err(usage(format!("reference `{s}` must be two numbers"))),
        },
        _ => Err(usage(format!("reference `{s}` must look like 0,0"))),
    }
}

fn aupf(front: &Path, reference: &str, out: Option<&Path>) -> Outcome {
    let reference = parse_reference(reference)?;
    let result = read_front(front)?;
    let used = result
        .entries
        .iter()
        .filter(|e| e.sensitivity >= reference[0] && e.directionality >= reference[1])
        .count();
    let value = json!({
        "aupf": result.aupf(reference),
        "entries": result.entries.len(),
        "entries_above_reference": used,
    });
    write_artifact("aupf", json!({"front": front.display().to_string(), "reference": reference}), vec![digest(front)?], value, out)
}

fn plot_data(cli: &Cli, front: Option<&Path>, data: Option<&Path>, registry: Option<&Path>, out: Option<&Path>) -> Outcome {
    let bytes = match (front, data) {
        (Some(f), None) => front_csv(&read_front(f)?)?,
        (None, Some(d)) => {
            let args = DataArgs {
                data: d.to_path_buf(),
                registry: registry.map(Path::to_path_buf),
                metrics: None,
            };
            let loaded = load(&args)?;
            let cfg = SensitivityConfig {
                alpha: cli.alpha,
                clamp: None,
            };
            let rows = sensitivity_report(&loaded.panel, &cfg).map_err(run_err)?;
            csv_bytes(|w| {
                w.write_record(["metric_id", "binary_sensitivity", "correlation"])?;
                for r in &rows {
                    w.write_record([r.metric_id.clone(), r.binary_sensitivity.to_string(), r.correlation.to_string()])?;
                }
                Ok(())
            })?
        }
        _ => return Err(usage("plot-data needs exactly one of --front or --data")),
    };
    emit(out, &bytes)?;
    Ok(())
}
