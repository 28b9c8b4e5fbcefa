//! `murmur`: split, featurize, train, evaluate, ensemble and report on
//! heart-sound recordings.
//!
//! Exit codes: 0 success, 1 data error, 2 usage or configuration error,
//! 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "murmur", version, about = "Heart-murmur detection pipeline")]
pub struct Cli {
    /// Worker threads for feature extraction and parallel runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Print results as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Dataset location: a CirCor-style directory or a CSV manifest.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct DataArgs {
    /// Directory of `<patient>.txt` metadata files and WAV recordings.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,

    /// CSV manifest with columns patient_id,label,wav_path.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FoldArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Decision,
    ProbAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradBackbone {
    Head,
    Mlp,
    Mixed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified patient-level train/validation/test split.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pooled log-mel statistics of every window, written as an embedding file.
    Featurize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON index of the segments written.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Train one run and write its output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// `logmel` or `embeddings:PATH`.
        #[arg(long, default_value = "logmel")]
        features: String,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Predict a fold with a checkpoint and score it.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "logmel")]
        features: String,
        #[arg(long, value_enum, default_value = "test")]
        fold: FoldArg,
        #[arg(long, value_enum, default_value = "decision")]
        rule: RuleArg,
        /// Prediction file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the metrics report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Two-model ensemble over every pair of runs.
    Ensemble {
        /// Run directories (or prediction files) of model A.
        #[arg(long, num_args = 1.., required = true)]
        runs_a: Vec<PathBuf>,
        /// Run directories (or prediction files) of model B.
        #[arg(long, num_args = 1.., required = true)]
        runs_b: Vec<PathBuf>,
        /// Prediction sets required per model.
        #[arg(long, default_value_t = 5)]
        runs_per_model: usize,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Mean metrics over run reports.
    Report {
        /// Run directories (or report.json files).
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label of the table.
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        patients_per_class: usize,
        #[arg(long, default_value_t = 3)]
        recordings_per_patient: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write class-separable synthetic embeddings here.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f32,
    },
    /// Compare autodiff gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "mixed")]
        backbone: GradBackbone,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "info" }))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
