//! `loadcast` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 malformed or invalid
//! data, 5 invalid argument, 6 training diverged, 7 bad model file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadcast::experiments::SweepKind;
use loadcast::{Error, Family};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "loadcast", version, about = "Short-term load forecasting with feedforward and Elman networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic hourly load series as CSV.
    Gen(GenArgs),
    /// Train a network with multiple restarts and save the best one.
    Train(TrainArgs),
    /// Train a saved model for more epochs.
    Continue(ContinueArgs),
    /// Recursive multi-step forecast from a saved model.
    Forecast(ForecastArgs),
    /// Train and rank every structure x delay x input-count configuration.
    Grid(GridArgs),
    /// One-dimensional training-curve sweep.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 61)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Noise standard deviation as a fraction of the base load.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub weekend_factor: Option<f64>,
    #[arg(long)]
    pub base_kw: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub goal: f64,
    /// Elman truncated-backpropagation depth.
    #[arg(long, default_value_t = 1)]
    pub bptt: usize,
    #[arg(long, default_value_t = 40)]
    pub train_days: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "feedforward")]
    pub family: Family,
    #[arg(long, default_value_t = 4)]
    pub network: u8,
    #[arg(long, default_value_t = 7)]
    pub inputs: usize,
    #[arg(long, default_value_t = 1)]
    pub delay: usize,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Write the best restart's `epoch,mse` curve here.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ContinueArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub extra_epochs: usize,
    /// Defaults to the learning rate stored in the model.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub goal: f64,
    #[arg(long, default_value_t = 1)]
    pub bptt: usize,
    /// Defaults to overwriting `--model`.
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub horizon_hours: usize,
    /// Samples of `--data` used as history; defaults to the model's training span.
    #[arg(long)]
    pub history_hours: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated: feedforward,elman.
    #[arg(long, value_delimiter = ',', default_value = "feedforward,elman")]
    pub families: Vec<Family>,
    /// e.g. `network=4|5,delay=1,inputs=7`.
    #[arg(long, default_value = "")]
    pub filter: String,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long, default_value_t = 21)]
    pub test_days: usize,
    #[arg(long)]
    pub report_out: PathBuf,
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    /// Include wall-clock fields in the report (makes it non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// inputs | structures | delays | elman-complexity
    #[arg(long)]
    pub kind: SweepKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "feedforward")]
    pub family: Family,
    #[arg(long, default_value_t = 4)]
    pub network: u8,
    #[arg(long, default_value_t = 7)]
    pub inputs: usize,
    #[arg(long, default_value_t = 1)]
    pub delay: usize,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::Parse { .. } | Error::Validation(_) => 4,
        Error::InvalidArgument(_) => 5,
        Error::Divergence { .. } | Error::TrainingFailed { .. } => 6,
        Error::ModelFormat(_) | Error::Json(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Continue(a) => commands::continue_training(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Grid(a) => commands::grid(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
