//! `vitforge`: dataset scanning, training, evaluation, prediction and
//! profiling for the ViT engine.

mod commands;
mod config;
mod sources;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vitforge_core::Error;

#[derive(Parser)]
#[command(
    name = "vitforge",
    version,
    about = "Vision Transformer fire/nofire classifier"
)]
struct Cli {
    /// Print machine-readable JSON instead of the human-readable report.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List a dataset and write one manifest JSON per split.
    Scan(ScanArgs),
    /// Train a model and write checkpoint, curves and logs.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Classify individual images.
    Predict(PredictArgs),
    /// Time forward, backward and inference passes.
    Profile(ProfileArgs),
    /// Write a synthetic two-class dataset in the folder layout.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct ScanArgs {
    /// Dataset root containing train/, val/ and test/.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for the manifests.
    #[arg(long, default_value = "manifests")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON run configuration; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root with train/ and val/ folders (or their manifests).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Architecture preset [default: tiny].
    #[arg(long, value_parser = ["tiny", "base"])]
    pub model: Option<String>,
    /// Output directory [default: run].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training epochs [default: 10].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.0001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decoupled weight decay, AdamW style [default: 0].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Seeds both initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also keep the best-validation-accuracy checkpoint.
    #[arg(long)]
    pub save_best: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Defaults to the checkpoint's training batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Directory for metrics.json and predictions.jsonl; defaults to the
    /// checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Args)]
pub struct ProfileArgs {
    /// Profile this checkpoint's model; otherwise a fresh `--model`.
    #[arg(long, conflicts_with = "model")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = ["tiny", "base"], default_value = "tiny")]
    pub model: String,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub timed: usize,
    /// Draw batches from this dataset's train split instead of synthetic images.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Epoch length, in samples, used with synthetic data.
    #[arg(long, default_value_t = 1509)]
    pub samples: usize,
    /// Where to write the JSON report.
    #[arg(long, default_value = "profile.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub train: usize,
    #[arg(long, default_value_t = 64)]
    pub val: usize,
    #[arg(long, default_value_t = 64)]
    pub test: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// 1 usage or configuration, 2 data or file format, 3 numeric fault.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::State(_) => 1,
                Error::Numeric { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("VITFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Config(format!(
                "VITFORGE_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Scan(a) => commands::scan(&a, cli.json),
        Command::Train(a) => commands::train(&a, cli.json),
        Command::Eval(a) => commands::eval(&a, cli.json),
        Command::Predict(a) => commands::predict(&a, cli.json),
        Command::Profile(a) => commands::profile(&a, cli.json),
        Command::Synth(a) => commands::synth(&a, cli.json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
