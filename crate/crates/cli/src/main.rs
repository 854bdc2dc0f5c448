//! `psz`: dataset generation, pressure-matching baselines and metric tables
//! for two-zone sound-field reproduction experiments.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psz_core::{ErrorKind, PszError};

#[derive(Debug, Parser)]
#[command(name = "psz", version, about, propagate_version = true)]
struct Cli {
    /// Scene configuration (TOML). Without it the built-in desk-scale scene
    /// is used, or the scene stored in the dataset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Dataset seed for `gen-dataset`; recorded in outputs elsewhere.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "psz-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset of virtual sources into --out.
    GenDataset(GenDatasetArgs),
    /// Design pressure-matching pre-filters and write them as PSZD files.
    SolvePm(SolvePmArgs),
    /// Search the regularization weight that matches a target array effort.
    TuneAe(TuneAeArgs),
    /// Score pre-filters on the monitor grid.
    Evaluate(EvaluateArgs),
    /// Put several evaluation runs side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenDatasetArgs {
    /// Number of virtual sources (default from config: 2000).
    #[arg(long)]
    n: Option<usize>,
    /// Number of frequency bins (default from config: 128).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct DatasetSelection {
    /// Dataset directory written by `gen-dataset`.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Mask patterns, comma separated. Default: all ten.
    #[arg(long = "mask", value_delimiter = ',', value_name = "NAME")]
    masks: Vec<String>,
    /// Which split to use: train, val, test or all.
    #[arg(long, default_value = "test")]
    subset: String,
    /// Drop dark-zone control points instead of keeping them with zero
    /// targets.
    #[arg(long)]
    bright_only: bool,
}

#[derive(Debug, Args)]
struct Regularization {
    /// Fixed Tikhonov weight shared by all frequencies.
    #[arg(long, conflicts_with = "tune_ae", allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Tune the weight per mask so the mean bAE hits this value (dB).
    #[arg(long, value_name = "DB", allow_negative_numbers = true)]
    tune_ae: Option<f64>,
}

#[derive(Debug, Args)]
struct SolvePmArgs {
    #[command(flatten)]
    selection: DatasetSelection,
    #[command(flatten)]
    regularization: Regularization,
}

#[derive(Debug, Args)]
struct TuneAeArgs {
    #[command(flatten)]
    selection: DatasetSelection,
    /// Target mean bAE in dB.
    #[arg(
        long,
        value_name = "DB",
        required_unless_present = "match_prefilters",
        allow_negative_numbers = true
    )]
    target: Option<f64>,
    /// Take the target per mask from the mean bAE of these pre-filters.
    #[arg(long = "match", value_name = "DIR", conflicts_with = "target")]
    match_prefilters: Option<PathBuf>,
    /// Allowed distance from the target, dB.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    selection: DatasetSelection,
    #[command(flatten)]
    regularization: Regularization,
    /// `pm` designs filters here; `external` reads them from --prefilters.
    #[arg(long, default_value = "pm", value_parser = ["pm", "external"])]
    method: String,
    /// Directory of PSZD pre-filter files with JSON sidecars.
    #[arg(long, value_name = "DIR", required_if_eq("method", "external"))]
    prefilters: Option<PathBuf>,
    /// Name for this run in tables. Default: the method id.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Evaluation output directories; the first is the baseline for deltas.
    #[arg(required = true, num_args = 2.., value_name = "RUN")]
    runs: Vec<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Validation => 3,
        ErrorKind::Numerical => 4,
    }
}

fn run(cli: Cli) -> Result<(), PszError> {
    let global = commands::Global::new(cli.config, cli.seed, cli.out)?;
    match cli.command {
        Command::GenDataset(a) => commands::gen_dataset(&global, a),
        Command::SolvePm(a) => commands::solve_pm(&global, a),
        Command::TuneAe(a) => commands::tune_ae(&global, a),
        Command::Evaluate(a) => commands::evaluate(&global, a),
        Command::Compare(a) => commands::compare(&global, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
