//! `mskml`: batch driver for synthetic data generation, training, grid
//! search, evaluation and reporting.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mskml", version, about = "Surrogate models for musculoskeletal simulation outputs")]
struct Cli {
    /// JSON file with default values for run flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort of trial bundles plus its oracle.
    Synth(SynthArgs),
    /// Train one model on the non-test trials of a split.
    Train(TrainArgs),
    /// Cross-validated grid search and final retrain.
    Search(SearchArgs),
    /// Score a trained model on held-out trials.
    Evaluate(EvaluateArgs),
    /// Combine metrics reports into one summary table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "linear")]
    pub task: String,
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    #[arg(long, default_value_t = 12)]
    pub f_in: usize,
    #[arg(long, default_value_t = 4)]
    pub f_out: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub subject_effect: f64,
    #[arg(long, default_value_t = 5)]
    pub lag: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

/// Flags shared by commands that read a cohort and split it.
#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub data: Option<std::path::PathBuf>,
    /// linear, ffnn or rnn.
    #[arg(long)]
    pub arch: Option<String>,
    /// se (subject-exposed) or sn (subject-naive).
    #[arg(long)]
    pub setting: Option<String>,
    /// Held-out subject for the subject-naive setting.
    #[arg(long)]
    pub test_subject: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Frames per recurrent input window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Prepend the normalized elapsed-time input channel.
    #[arg(long)]
    pub time_feature: bool,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// vanilla, lstm, gru, or a b- prefixed bidirectional variant.
    #[arg(long)]
    pub cell: Option<String>,
    /// xavier_normal, random_normal or he_normal.
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Named grid: table1, table2 or smoke.
    #[arg(long, conflicts_with = "grid_file")]
    pub grid: Option<String>,
    /// JSON grid definition.
    #[arg(long)]
    pub grid_file: Option<std::path::PathBuf>,
    /// Print the configuration count and exit without training.
    #[arg(long)]
    pub dry_run: bool,
    /// Configurations per checkpoint flush.
    #[arg(long, default_value_t = 32)]
    pub chunk: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model JSON written by train or search.
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub data: Option<std::path::PathBuf>,
    /// Split plan; its test trials are scored. Without it every trial is.
    #[arg(long)]
    pub plan: Option<std::path::PathBuf>,
    /// Label for the model column of the report.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics report JSON files written by evaluate.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<std::path::PathBuf>,
    /// Restrict to one output category.
    #[arg(long)]
    pub category: Option<String>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = config::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a, &file),
        Command::Search(a) => commands::search(a, &file),
        Command::Evaluate(a) => commands::evaluate(a, &file),
        Command::Report(a) => commands::report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
