//! The `cgscore` command-line tool.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical failure
//! (singular Gram matrix, non-positive pivot), 4 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, Direction};
use crate::cgm1;
use crate::dataset::{inject_label_noise, Dataset, DatasetError};
use crate::kernel::{gram, BinaryView};
use crate::linalg::{invert_spd, InvertOptions, LinalgError};
use crate::multiclass::{self, MulticlassError, StochasticConfig};
use crate::report::{self, AnalysisReport, NamedCorrelation, ReportError, RunManifest, ScoreSidecar};
use crate::scoring::ScoringError;
use crate::synth::GaussianBenchmark;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::SingularSample(_) => Self::Numerical(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

fn linalg_is_numerical(e: &LinalgError) -> bool {
    matches!(e, LinalgError::NotPositiveDefinite { .. } | LinalgError::Singular { .. })
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        if linalg_is_numerical(&e) {
            Self::Numerical(e.to_string())
        } else {
            Self::Input(e.to_string())
        }
    }
}

impl From<MulticlassError> for CliError {
    fn from(e: MulticlassError) -> Self {
        let numerical = match &e {
            MulticlassError::Run { source, .. } => match source {
                ScoringError::Linalg(l) => linalg_is_numerical(l),
                ScoringError::NonPositiveDiagonal { .. } => true,
                _ => false,
            },
            _ => false,
        };
        if numerical {
            Self::Numerical(e.to_string())
        } else {
            Self::Input(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cgscore", version, about = "Complexity-gap data valuation")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CGV_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every instance of a labelled dataset.
    Score(ScoreArgs),
    /// Generate the two-class Gaussian benchmark.
    Synth(SynthArgs),
    /// Noise-detection curve of a score column against a noise mask.
    Detect(DetectArgs),
    /// Class-stratified removal order.
    Prune(PruneArgs),
    /// Spearman and Pearson correlation of two score columns.
    Correlate(CorrelateArgs),
    /// Inverse-identity and spectrum diagnostics of a dataset's Gram matrix.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Cgm1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PruneDirection {
    LowFirst,
    HighFirst,
}

impl From<PruneDirection> for Direction {
    fn from(d: PruneDirection) -> Self {
        match d {
            PruneDirection::LowFirst => Direction::LowFirst,
            PruneDirection::HighFirst => Direction::HighFirst,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: InputFormat,
    /// Negatives sampled per positive.
    #[arg(long, default_value_t = 3)]
    pub ratio: usize,
    /// Runs per class (default: enough to touch half of each negative pool).
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Diagonal regularizer added before inversion.
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 3000)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 0.25)]
    pub variance: f64,
    /// Fraction of labels to flip.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub seed: u64,
    /// CGM1 output; the mask goes to `<out>.mask.csv` unless `--mask` is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value = "cg")]
    pub column: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub direction: PruneDirection,
    #[arg(long, default_value = "cg")]
    pub column: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value = "cg")]
    pub column_a: String,
    #[arg(long, default_value = "cg")]
    pub column_b: String,
    /// JSON report path (default: print to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: InputFormat,
    /// Positive class of the one-vs-rest view (default: smallest label).
    #[arg(long)]
    pub class: Option<u32>,
    #[arg(long)]
    pub seed: u64,
    /// Draws of X for the spectrum estimate; 0 skips the spectrum check.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// JSON report path (default: print to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Internal(e.to_string()))?;
    let threads = cli.threads;
    pool.install(|| match cli.command {
        Command::Score(a) => cmd_score(&a, threads),
        Command::Synth(a) => cmd_synth(&a, threads),
        Command::Detect(a) => cmd_detect(&a),
        Command::Prune(a) => cmd_prune(&a),
        Command::Correlate(a) => cmd_correlate(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    })
}

fn load_dataset(path: &Path, format: InputFormat) -> Result<Dataset, CliError> {
    Ok(match format {
        InputFormat::Csv => Dataset::load_csv(path)?,
        InputFormat::Cgm1 => cgm1::load_binary(path)?,
    })
}

fn format_name(f: InputFormat) -> &'static str {
    match f {
        InputFormat::Csv => "csv",
        InputFormat::Cgm1 => "cgm1",
    }
}

fn default_runs(dataset: &Dataset, ratio: usize) -> usize {
    let n = dataset.n();
    dataset
        .classes()
        .into_iter()
        .map(|c| {
            let p = dataset.labels().iter().filter(|&&l| l == c).count();
            multiclass::recommended_runs(p, n - p, ratio)
        })
        .max()
        .unwrap_or(1)
}

fn write_manifest(
    out: &Path,
    command: &str,
    flags: BTreeMap<String, serde_json::Value>,
    seed: Option<u64>,
    inputs: &[(&str, &Path)],
    started: Instant,
) -> Result<(), CliError> {
    let mut input_fingerprints = BTreeMap::new();
    for (name, path) in inputs {
        input_fingerprints.insert((*name).to_string(), report::file_sha256(path)?);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        flags,
        seed,
        input_fingerprints,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    report::save_json(&manifest, &report::with_suffix(out, ".manifest.json"))?;
    Ok(())
}

fn flag_map(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    pairs.iter().map(|(k, v)| ((*k).to_string(), v.clone())).collect()
}

fn cmd_score(a: &ScoreArgs, threads: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    let dataset = load_dataset(&a.input, a.format)?;
    let runs = a.runs.unwrap_or_else(|| default_runs(&dataset, a.ratio));
    let mut config = StochasticConfig::new(a.ratio, runs, a.seed);
    config.ridge = a.ridge;
    let table = multiclass::score_all(&dataset, &config)?;
    report::save_score_csv(&report::score_rows(&table), &a.out)?;
    report::save_json(&ScoreSidecar::from_table(&table), &report::with_suffix(&a.out, ".json"))?;
    let flags = flag_map(&[
        ("input", json!(a.input)),
        ("format", json!(format_name(a.format))),
        ("ratio", json!(a.ratio)),
        ("runs", json!(runs)),
        ("seed", json!(a.seed)),
        ("ridge", json!(a.ridge)),
        ("out", json!(a.out)),
        ("threads", json!(threads)),
    ]);
    write_manifest(&a.out, "score", flags, Some(a.seed), &[("input", &a.input)], started)
}

fn cmd_synth(a: &SynthArgs, threads: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    let bench = GaussianBenchmark {
        n_per_class: a.n_per_class,
        dim: a.dim,
        mean_offset: a.offset,
        variance: a.variance,
    };
    let clean = bench.sample(a.seed)?.dataset;
    let (dataset, mask) = inject_label_noise(&clean, a.noise, a.seed)?;
    cgm1::save_binary(&dataset, &a.out)?;
    let mask_path = a.mask.clone().unwrap_or_else(|| report::with_suffix(&a.out, ".mask.csv"));
    report::save_mask_csv(&mask, dataset.labels(), &mask_path)?;
    let flags = flag_map(&[
        ("n_per_class", json!(a.n_per_class)),
        ("dim", json!(a.dim)),
        ("offset", json!(a.offset)),
        ("variance", json!(a.variance)),
        ("noise", json!(a.noise)),
        ("seed", json!(a.seed)),
        ("out", json!(a.out)),
        ("mask", json!(mask_path)),
        ("threads", json!(threads)),
    ]);
    write_manifest(&a.out, "synth", flags, Some(a.seed), &[], started)
}

fn score_column(rows: &[report::ScoreRow], column: &str, path: &Path) -> Result<Vec<f64>, CliError> {
    rows.iter()
        .map(|r| r.column(column))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Input(format!("{}: unknown score column '{column}'", path.display())))
}

fn cmd_detect(a: &DetectArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let rows = report::load_score_csv(&a.scores)?;
    let mask = report::load_mask_csv(&a.mask)?;
    if rows.len() != mask.len() {
        return Err(CliError::Input(format!(
            "score table has {} rows but mask has {}",
            rows.len(),
            mask.len()
        )));
    }
    let scores = score_column(&rows, &a.column, &a.scores)?;
    let labels: Vec<u32> = rows.iter().map(|r| r.label).collect();
    let partial: Vec<f64> = rows.iter().map(|r| r.partial_cross).collect();
    let out = AnalysisReport {
        detection: Some(analysis::detection_curve(&scores, &mask, &analysis::default_grid())?),
        class_stats: Some(analysis::class_stats(&scores, &labels, 20)?),
        diagnostics: report::Diagnostics {
            sign_split: Some(analysis::partial_sign_split(&partial, &mask)?),
            ..Default::default()
        },
        ..Default::default()
    };
    report::save_json(&out, &a.out)?;
    let flags = flag_map(&[
        ("scores", json!(a.scores)),
        ("mask", json!(a.mask)),
        ("column", json!(a.column)),
        ("out", json!(a.out)),
    ]);
    write_manifest(&a.out, "detect", flags, None, &[("scores", &a.scores), ("mask", &a.mask)], started)
}

fn cmd_prune(a: &PruneArgs) -> Result<(), CliError> {
    use std::io::Write;
    let started = Instant::now();
    let rows = report::load_score_csv(&a.scores)?;
    let scores = score_column(&rows, &a.column, &a.scores)?;
    let labels: Vec<u32> = rows.iter().map(|r| r.label).collect();
    let order = analysis::prune_order(&scores, &labels, a.direction.into())?;
    let write = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
        writeln!(w, "rank,index,label,score")?;
        for (rank, &i) in order.iter().enumerate() {
            writeln!(w, "{rank},{i},{},{}", labels[i], crate::dataset::fmt_f64(scores[i]))?;
        }
        w.flush()
    };
    write().map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))?;
    let direction = match a.direction {
        PruneDirection::LowFirst => "low-first",
        PruneDirection::HighFirst => "high-first",
    };
    let flags = flag_map(&[
        ("scores", json!(a.scores)),
        ("direction", json!(direction)),
        ("column", json!(a.column)),
        ("out", json!(a.out)),
    ]);
    write_manifest(&a.out, "prune", flags, None, &[("scores", &a.scores)], started)
}

fn cmd_correlate(a: &CorrelateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let xa = report::load_column(&a.a, &a.column_a)?;
    let xb = report::load_column(&a.b, &a.column_b)?;
    let out = AnalysisReport {
        correlations: vec![NamedCorrelation {
            a: format!("{}:{}", a.a.display(), a.column_a),
            b: format!("{}:{}", a.b.display(), a.column_b),
            result: analysis::correlate(&xa, &xb)?,
        }],
        ..Default::default()
    };
    emit_report(&out, a.out.as_deref())?;
    if let Some(path) = &a.out {
        let flags = flag_map(&[
            ("a", json!(a.a)),
            ("b", json!(a.b)),
            ("column_a", json!(a.column_a)),
            ("column_b", json!(a.column_b)),
            ("out", json!(path)),
        ]);
        write_manifest(path, "correlate", flags, None, &[("a", &a.a), ("b", &a.b)], started)?;
    }
    Ok(())
}

fn emit_report(r: &AnalysisReport, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(report::save_json(r, path)?),
        None => {
            let text = serde_json::to_string_pretty(r).map_err(|e| CliError::Internal(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let dataset = load_dataset(&a.input, a.format)?;
    let positive = match a.class {
        Some(c) => c,
        None => dataset.classes()[0],
    };
    let view = BinaryView::one_vs_rest(&dataset, positive).map_err(|e| CliError::Input(e.to_string()))?;
    let h = gram(&dataset, &view).map_err(|e| CliError::Input(e.to_string()))?;
    let inv = invert_spd(&h, InvertOptions::with_ridge(a.ridge))?;
    let spectrum = if a.trials > 0 {
        Some(analysis::sigma_spectrum_check(&h, a.trials, a.seed)?)
    } else {
        None
    };
    let out = AnalysisReport {
        diagnostics: report::Diagnostics {
            identity: Some(analysis::inverse_identity_diagnostic(&inv)?),
            spectrum,
            ..Default::default()
        },
        ..Default::default()
    };
    emit_report(&out, a.out.as_deref())?;
    if let Some(path) = &a.out {
        let flags = flag_map(&[
            ("input", json!(a.input)),
            ("format", json!(format_name(a.format))),
            ("class", json!(positive)),
            ("seed", json!(a.seed)),
            ("trials", json!(a.trials)),
            ("ridge", json!(a.ridge)),
            ("out", json!(path)),
        ]);
        write_manifest(path, "diagnose", flags, Some(a.seed), &[("input", &a.input)], started)?;
    }
    Ok(())
}
