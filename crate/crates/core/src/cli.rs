//! The `qfs` command line: one subcommand per pipeline stage, JSON hand-offs.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::alpha_search::SearchError;
use crate::artifact::{self, ArtifactError};
use crate::data::{self, DataError, Dataset, Schema};
use crate::eval::{self, BenchmarkConfig, EvalError, Model};
use crate::qubo::{build_qubo, QuboError, QuboInstance};
use crate::report::{self, Format};
use crate::selection::{self, SelectOptions, SelectionError, SelectionMethod};
use crate::solver::{backend_solve, Params, SolverError, SIMULATED_ANNEALING};
use crate::stats::{self, Measure, ScoreSet, StatsError, DEFAULT_BINS};
use crate::synthetic::{planted, PlantedConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

const AFTER_HELP: &str = "\
Settings are resolved in this order: command-line flags, then the TOML file
given with --config, then built-in defaults. Config keys use the long flag
names with underscores (k_list, beta_end, ...). Randomised stages need a seed
from a flag or the config file; nothing is seeded from the clock.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.";

#[derive(Debug, Parser)]
#[command(name = "qfs", version, about = "QUBO feature selection pipeline", after_help = AFTER_HELP)]
struct Cli {
    /// Cap on worker threads for every parallel stage.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with default settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct DataArgs {
    /// Dataset CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name of the target column.
    #[arg(long)]
    target: Option<String>,
    /// Column kind overrides, e.g. "age:continuous,smoker:binary".
    #[arg(long)]
    schema: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
struct ScheduleArgs {
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    /// Variable cap for the exhaustive backend.
    #[arg(long)]
    max_vars: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuboFormat {
    Json,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectKind {
    Qfs,
    Topk,
    Original,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a dataset and print its inferred schema.
    LoadCheck {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute importance and redundancy scores.
    Score {
        #[command(flatten)]
        data: DataArgs,
        /// spearman or mi.
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a score set into a QUBO instance for one alpha.
    BuildQubo {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: QuboFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimise a QUBO instance (JSON artifact or sparse text).
    Solve {
        #[arg(long)]
        qubo: PathBuf,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select features with QFS, a top-k baseline or all of them.
    Select {
        #[arg(value_enum)]
        method: SelectKind,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        k: Option<usize>,
        /// qfs: spearman or mi; topk: anova or chi2.
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Accepted relative miss between requested and achieved k.
        #[arg(long)]
        k_tolerance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Restrict a dataset to the features of a selection.
    Project {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold comparison of selection methods.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        /// Comma list of qfs-mi, qfs-spearman, topk-anova, topk-chi2, original.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Comma list of feature counts.
        #[arg(long = "k", value_delimiter = ',')]
        k_list: Option<Vec<usize>>,
        /// Comma list of knn[:k], logreg[:lr:epochs:l2], knn-reg[:k], tree[:depth:leaf].
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        k_tolerance: Option<f64>,
        /// Select once on the full dataset instead of per training fold.
        #[arg(long)]
        global_selection: bool,
        #[arg(long)]
        positive_class: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for report.json, table.csv and detail.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a benchmark report as a comparison table.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted dataset with redundant informative groups.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        regression: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
    Markdown,
}

/// Settings read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub schema: Option<String>,
    pub measure: Option<String>,
    pub bins: Option<usize>,
    pub k: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub methods: Option<Vec<String>>,
    pub models: Option<Vec<String>>,
    pub backend: Option<String>,
    pub sweeps: Option<usize>,
    pub restarts: Option<usize>,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub max_vars: Option<usize>,
    pub max_iters: Option<usize>,
    pub k_tolerance: Option<f64>,
    pub folds: Option<usize>,
    pub global_selection: Option<bool>,
    pub positive_class: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

fn data_error(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: msg.into(),
    }
}

fn internal(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INTERNAL,
        message: msg.into(),
    }
}

fn stats_code(e: &StatsError) -> i32 {
    match e {
        StatsError::MeasureNotApplicable { .. } => EXIT_USAGE,
        StatsError::Cell { source, .. } => stats_code(source),
        _ => EXIT_DATA,
    }
}

fn qubo_code(e: &QuboError) -> i32 {
    match e {
        QuboError::AlphaOutOfRange(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn solver_code(e: &SolverError) -> i32 {
    match e {
        SolverError::NotImplemented(_) | SolverError::InvalidResult(_) => EXIT_INTERNAL,
        SolverError::EmptyInstance => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

fn selection_code(e: &SelectionError) -> i32 {
    match e {
        SelectionError::Stats(s) => stats_code(s),
        SelectionError::Data(_) => EXIT_DATA,
        SelectionError::Search(SearchError::Solver(s)) => solver_code(s),
        SelectionError::Search(SearchError::Qubo(q)) => qubo_code(q),
        SelectionError::CardinalityMiss { .. } => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

fn eval_code(e: &EvalError) -> i32 {
    match e {
        EvalError::Cell { source, .. } => eval_code(source),
        EvalError::Selection(s) => selection_code(s),
        EvalError::Data(_) => EXIT_DATA,
        EvalError::InvalidModel(_) | EvalError::TargetMismatch { .. } | EvalError::InvalidBenchmark(_) => EXIT_USAGE,
        _ => EXIT_INTERNAL,
    }
}

macro_rules! exit_class {
    ($($ty:ty => $code:expr),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let code: fn(&$ty) -> i32 = $code;
                CliError { code: code(&e), message: e.to_string() }
            }
        })*
    };
}

exit_class! {
    DataError => |_| EXIT_DATA,
    ArtifactError => |_| EXIT_DATA,
    StatsError => stats_code,
    QuboError => qubo_code,
    SolverError => solver_code,
    SelectionError => selection_code,
    EvalError => eval_code,
}

/// Entry point behind the `qfs` binary; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

struct Resolved<'a> {
    cfg: &'a RunConfig,
}

impl Resolved<'_> {
    fn dataset(&self, args: &DataArgs) -> Result<Dataset, CliError> {
        let path = args
            .data
            .clone()
            .or_else(|| self.cfg.data.clone())
            .ok_or_else(|| usage("--data is required"))?;
        let target = args
            .target
            .clone()
            .or_else(|| self.cfg.target.clone())
            .ok_or_else(|| usage("--target is required"))?;
        let schema = match args.schema.as_ref().or(self.cfg.schema.as_ref()) {
            Some(s) => Schema::parse(s).map_err(|e| usage(e.to_string()))?,
            None => Schema::new(),
        };
        Ok(data::load_csv(&path, &schema, &target)?)
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.cfg.seed)
            .ok_or_else(|| usage("a seed is required (--seed or `seed` in the config file)"))
    }

    fn out(&self, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone().or_else(|| self.cfg.out.clone())
    }

    fn bins(&self, flag: Option<usize>) -> usize {
        flag.or(self.cfg.bins).unwrap_or(DEFAULT_BINS)
    }

    fn params(&self, s: &ScheduleArgs) -> Params {
        let mut p = Params::new();
        let mut put = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                p.insert(key.to_string(), v);
            }
        };
        put("sweeps", s.sweeps.or(self.cfg.sweeps).map(|v| v.to_string()));
        put("restarts", s.restarts.or(self.cfg.restarts).map(|v| v.to_string()));
        put("beta_start", s.beta_start.or(self.cfg.beta_start).map(|v| v.to_string()));
        put("beta_end", s.beta_end.or(self.cfg.beta_end).map(|v| v.to_string()));
        put("max_vars", s.max_vars.or(self.cfg.max_vars).map(|v| v.to_string()));
        p
    }

    fn backend(&self, s: &ScheduleArgs) -> String {
        s.backend
            .clone()
            .or_else(|| self.cfg.backend.clone())
            .unwrap_or_else(|| SIMULATED_ANNEALING.to_string())
    }

    fn select_options(&self, bins: Option<usize>, s: &ScheduleArgs, max_iters: Option<usize>, tol: Option<f64>) -> SelectOptions {
        let defaults = SelectOptions::default();
        SelectOptions {
            bins: self.bins(bins),
            params: self.params(s),
            max_iters: max_iters.or(self.cfg.max_iters).unwrap_or(defaults.max_iters),
            k_tolerance: tol.or(self.cfg.k_tolerance).unwrap_or(defaults.k_tolerance),
        }
    }

    fn measure(&self, flag: &Option<String>, default: Measure) -> Result<Measure, CliError> {
        match flag.as_ref().or(self.cfg.measure.as_ref()) {
            Some(m) => m.parse().map_err(|e: String| usage(e)),
            None => Ok(default),
        }
    }
}

/// Write to `out`, or to standard output when no path is given.
fn emit(out: Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(artifact::write_atomic(&path, bytes)?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| internal(format!("stdout: {e}")))
        }
    }
}

#[derive(Debug, Serialize)]
struct LoadCheck {
    n_records: usize,
    n_features: usize,
    target: String,
    target_kind: data::TargetKind,
    schema: String,
}

/// Parse a benchmark method label back into a method.
pub fn parse_method(label: &str, backend: &str) -> Result<SelectionMethod, String> {
    let label = label.trim();
    if label == "original" {
        return Ok(SelectionMethod::Original);
    }
    let (family, measure) = label
        .split_once('-')
        .ok_or_else(|| format!("unknown method {label:?}"))?;
    let measure: Measure = measure.parse()?;
    match family {
        "qfs" => Ok(SelectionMethod::Qfs {
            measure,
            backend: backend.to_string(),
        }),
        "topk" => Ok(SelectionMethod::TopK { measure }),
        _ => Err(format!("unknown method {label:?}")),
    }
}

fn read_qubo(path: &Path) -> Result<QuboInstance, CliError> {
    let bytes = artifact::read_bytes(path)?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'{') {
        return Ok(artifact::from_json(path, &bytes, artifact::KIND_QUBO)?);
    }
    let text = String::from_utf8(bytes).map_err(|_| data_error(format!("{}: not UTF-8", path.display())))?;
    QuboInstance::from_sparse_text(&text).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    set_threads(cli.threads.or(cfg.threads))?;
    let r = Resolved { cfg: &cfg };

    match cli.command {
        Command::LoadCheck { data, out } => {
            let ds = r.dataset(&data)?;
            let check = LoadCheck {
                n_records: ds.n_records(),
                n_features: ds.n_features(),
                target: ds.target().name().to_string(),
                target_kind: ds.target_kind(),
                schema: ds.schema_string(),
            };
            emit(r.out(&out), &artifact::to_json(artifact::KIND_LOAD_CHECK, &check))
        }
        Command::Score {
            data,
            measure,
            bins,
            out,
        } => {
            let ds = r.dataset(&data)?;
            let measure = r.measure(&measure, Measure::MutualInformation)?;
            let scores = stats::score_dataset(&ds, measure, r.bins(bins))?;
            emit(r.out(&out), &artifact::to_json(artifact::KIND_SCORES, &scores))
        }
        Command::BuildQubo {
            scores,
            alpha,
            format,
            out,
        } => {
            let s: ScoreSet = artifact::read_envelope(&scores, artifact::KIND_SCORES)?;
            let q = build_qubo(&s, alpha)?;
            let bytes = match format {
                QuboFormat::Json => artifact::to_json(artifact::KIND_QUBO, &q),
                QuboFormat::Sparse => q.to_sparse_text().into_bytes(),
            };
            emit(r.out(&out), &bytes)
        }
        Command::Solve {
            qubo,
            schedule,
            seed,
            out,
        } => {
            let q = read_qubo(&qubo)?;
            let backend = r.backend(&schedule);
            let mut params = r.params(&schedule);
            let seed = if backend == SIMULATED_ANNEALING {
                Some(r.seed(seed)?)
            } else {
                seed.or(cfg.seed)
            };
            if let Some(seed) = seed {
                params.insert("seed".into(), seed.to_string());
            }
            let result = backend_solve(&q, &backend, &params)?;
            emit(r.out(&out), &artifact::to_json(artifact::KIND_SOLVE, &result))
        }
        Command::Select {
            method,
            data,
            k,
            measure,
            bins,
            schedule,
            max_iters,
            k_tolerance,
            seed,
            out,
        } => {
            let ds = r.dataset(&data)?;
            let opts = r.select_options(bins, &schedule, max_iters, k_tolerance);
            let (method, seed) = match method {
                SelectKind::Qfs => (
                    SelectionMethod::Qfs {
                        measure: r.measure(&measure, Measure::MutualInformation)?,
                        backend: r.backend(&schedule),
                    },
                    r.seed(seed)?,
                ),
                SelectKind::Topk => (
                    SelectionMethod::TopK {
                        measure: r.measure(&measure, Measure::AnovaF)?,
                    },
                    seed.or(cfg.seed).unwrap_or(0),
                ),
                SelectKind::Original => (SelectionMethod::Original, seed.or(cfg.seed).unwrap_or(0)),
            };
            let k = match method {
                SelectionMethod::Original => ds.n_features(),
                _ => k.or(cfg.k).ok_or_else(|| usage("--k is required"))?,
            };
            let sel = selection::select(&ds, &method, k, seed, &opts)?;
            emit(r.out(&out), &artifact::to_json(artifact::KIND_SELECTION, &sel))
        }
        Command::Project { data, selection, out } => {
            let ds = r.dataset(&data)?;
            let sel: selection::Selection = artifact::read_envelope(&selection, artifact::KIND_SELECTION)?;
            let projected = selection::project(&ds, &sel)?;
            let mut bytes = Vec::new();
            projected.write_csv(&mut bytes)?;
            emit(r.out(&out), &bytes)
        }
        Command::Bench {
            data,
            methods,
            k_list,
            models,
            folds,
            bins,
            schedule,
            max_iters,
            k_tolerance,
            global_selection,
            positive_class,
            seed,
            out,
        } => {
            let ds = r.dataset(&data)?;
            let seed = r.seed(seed)?;
            let backend = r.backend(&schedule);
            let method_labels = methods
                .or_else(|| cfg.methods.clone())
                .unwrap_or_else(|| vec!["qfs-mi".into(), "topk-anova".into(), "original".into()]);
            let methods = method_labels
                .iter()
                .map(|m| parse_method(m, &backend))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?;
            let default_models = if ds.target_kind().is_classification() {
                vec!["knn".to_string()]
            } else {
                vec!["knn-reg".to_string()]
            };
            let models = models
                .or_else(|| cfg.models.clone())
                .unwrap_or(default_models)
                .iter()
                .map(|m| m.parse::<Model>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| usage(e.to_string()))?;
            let k_list = k_list.or_else(|| cfg.k_list.clone()).or(cfg.k.map(|k| vec![k]));
            let needs_k = methods.iter().any(SelectionMethod::uses_k);
            let k_list = match k_list {
                Some(k) => k,
                None if needs_k => return Err(usage("--k is required")),
                None => Vec::new(),
            };
            let mut bc = BenchmarkConfig::new(methods, k_list, models);
            bc.k_folds = folds.or(cfg.folds).unwrap_or(5);
            bc.seed = seed;
            bc.global_selection = global_selection || cfg.global_selection.unwrap_or(false);
            bc.positive_class = positive_class.or(cfg.positive_class).unwrap_or(1);
            bc.select = r.select_options(bins, &schedule, max_iters, k_tolerance);
            let report = eval::run_benchmark(&ds, &bc)?;
            let json = artifact::to_json(artifact::KIND_REPORT, &report);
            match r.out(&out) {
                None => emit(None, &json),
                Some(dir) => {
                    std::fs::create_dir_all(&dir)
                        .map_err(|e| data_error(format!("{}: {e}", dir.display())))?;
                    let mut table = Vec::new();
                    report
                        .write_table_csv(&mut table)
                        .map_err(|e| internal(e.to_string()))?;
                    let mut detail = Vec::new();
                    report
                        .write_detail_csv(&mut detail)
                        .map_err(|e| internal(e.to_string()))?;
                    artifact::write_atomic(&dir.join("report.json"), &json)?;
                    artifact::write_atomic(&dir.join("table.csv"), &table)?;
                    artifact::write_atomic(&dir.join("detail.csv"), &detail)?;
                    Ok(())
                }
            }
        }
        Command::Report {
            report: path,
            format,
            out,
        } => {
            let rep: eval::EvaluationReport = artifact::read_envelope(&path, artifact::KIND_REPORT)?;
            let format = match format {
                ReportFormat::Csv => Format::Csv,
                ReportFormat::Markdown => Format::Markdown,
            };
            emit(r.out(&out), report::render(&rep, format).as_bytes())
        }
        Command::Synth {
            seed,
            records,
            regression,
            out,
        } => {
            let seed = r.seed(seed)?;
            let mut pc = PlantedConfig {
                regression,
                ..PlantedConfig::default()
            };
            if let Some(n) = records {
                pc.n_records = n;
            }
            if pc.n_records < 2 {
                return Err(usage("--records must be at least 2"));
            }
            let p = planted(&pc, seed);
            let mut bytes = Vec::new();
            p.dataset.write_csv(&mut bytes)?;
            emit(r.out(&out), &bytes)
        }
    }
}
