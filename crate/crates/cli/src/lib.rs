//! The `mixplan` command-line tool.
//!
//! [`run`] parses arguments, resolves flags against the optional JSON config
//! file and executes one subcommand. Every output file gets a
//! `<file>.run.json` sidecar holding the resolved parameters and the tool
//! version.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mixplan_core::{InputFormat, Metric, TableFormat, Tokenizer};

pub mod commands;
pub mod config;
pub mod figure;

use config::{parse_state, parse_tokens, parse_unit_interval};
use figure::FigureKind;

/// Exit status for data and I/O errors.
pub const EXIT_DATA_ERROR: i32 = 1;
/// Exit status for malformed command lines.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mixplan",
    version,
    about = "Plan midtraining data mixtures and analyze their effects"
)]
pub struct Cli {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MIXPLAN_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample documents and count unigram tokens into a UDIST file.
    Ingest(IngestArgs),
    /// Score distributions and mixtures against target distributions.
    Similarity(SimilarityArgs),
    /// Rank candidate mixtures by proximity advantage.
    Plan(PlanArgs),
    /// Pearson correlation with a seeded permutation test.
    Correlate(CorrelateArgs),
    /// Check a midtraining plan and emit its batch manifest.
    Schedule(ScheduleArgs),
    /// Evaluate plans over a range of start points or weights.
    Sweep(SweepArgs),
    /// Emit a hyperparameter preset.
    Preset(PresetArgs),
    /// Layer-by-layer linear CKA between model states.
    Cka(CkaArgs),
    /// Aggregate a loss ledger into a results table.
    Report(ReportArgs),
    /// Emit plot data and a static SVG.
    Figure(FigureArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// `txt` or `jsonl:<field>`
    #[arg(long, default_value = "txt")]
    pub format: InputFormat,
    /// Maximum number of sampled documents [default: 10000]
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `unicode-words` or `pretok` [default: unicode-words]
    #[arg(long)]
    pub tokenizer: Option<Tokenizer>,
    /// Distribution name (default: output file stem)
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long = "dists", required = true, num_args = 1..)]
    pub dists: Vec<PathBuf>,
    /// JSON object mapping mixture names to weighted components.
    #[arg(long)]
    pub mixes: Option<PathBuf>,
    #[arg(long, default_value = "combined")]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub base: String,
    #[arg(long)]
    pub target: String,
    #[arg(long, required = true, num_args = 1..)]
    pub candidates: Vec<String>,
    /// Advantages below this magnitude are flagged as near zero [default: 0.01]
    #[arg(long)]
    pub grey_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV with `advantage` and `improvement` columns.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 10000]
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, value_parser = parse_tokens)]
    pub total_tokens: u64,
    /// Start of the midtraining window (switch point with `--continued`).
    #[arg(long, value_parser = parse_tokens)]
    pub start_tokens: u64,
    /// Share of specialized batches; fixed at 1 with `--continued`.
    #[arg(long, value_parser = parse_unit_interval, required_unless_present = "continued")]
    pub weight: Option<f64>,
    /// Specialized tokens available.
    #[arg(long, value_parser = parse_tokens)]
    pub available: u64,
    /// [default: 2097152]
    #[arg(long, value_parser = parse_tokens)]
    pub batch_tokens: Option<u64>,
    /// Plan continued pretraining on 100% specialized data.
    #[arg(long, conflicts_with = "weight")]
    pub continued: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Timing,
    Weight,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Comma-separated start points (timing) or weights (weight).
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long, value_parser = parse_tokens)]
    pub total_tokens: u64,
    /// Fixed start point for a weight sweep.
    #[arg(long, value_parser = parse_tokens)]
    pub start_tokens: Option<u64>,
    /// Fixed weight for a timing sweep.
    #[arg(long, value_parser = parse_unit_interval)]
    pub weight: Option<f64>,
    #[arg(long, value_parser = parse_tokens)]
    pub available: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// `70m`, `160m` or `410m`
    #[arg(long)]
    pub model: String,
    /// `pretrain` or `finetune`
    #[arg(long)]
    pub phase: String,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CkaArgs {
    /// `<name>=<dir>` holding `<name>__layer<k>__<probe>.actv` dumps.
    #[arg(long = "state", required = true, value_parser = parse_state)]
    pub states: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub probe: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub losses: PathBuf,
    /// Mix whose C4 loss is the forgetting baseline.
    #[arg(long)]
    pub control: Option<String>,
    #[arg(long, default_value = "markdown")]
    pub format: TableFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// `scatter`, `curves` or `heatmap`
    #[arg(long)]
    pub kind: FigureKind,
    #[arg(long)]
    pub input: PathBuf,
    /// [default: 0.01]
    #[arg(long)]
    pub grey_threshold: Option<f64>,
    /// Plot data CSV; the SVG goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (including the program name) and runs it, returning the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            EXIT_DATA_ERROR
        }
    }
}
