//! Command-line front end: train on one corpus, predict on another, then
//! aggregate, ensemble and evaluate the frame-level outputs.
//!
//! Exit codes: 0 success, 2 usage, 3 data/validation, 4 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mmcer_core::Error;

#[derive(Parser)]
#[command(name = "mmcer", version, about = "Multimodal compound-expression recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the `train` split of one manifest, validate on the `val`
    /// split of another (the same file may serve both roles).
    Train(TrainArgs),
    /// Run a checkpoint over every video of a manifest and write one
    /// prediction row per frame.
    Predict(PredictArgs),
    /// Reduce a prediction file to one label per video.
    Aggregate(AggregateArgs),
    /// Fuse one or more prediction files frame-by-frame with a trailing
    /// voting window.
    Ensemble(EnsembleArgs),
    /// Score a prediction file against the labels of a gold manifest.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset plus manifest.
    Synth(SynthArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    train_manifest: PathBuf,
    #[arg(long)]
    val_manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of classes.
    #[arg(long, default_value_t = 7)]
    k: usize,
    /// Common embedding width after the temporal convolutions.
    #[arg(long, default_value_t = 256)]
    d_model: usize,
    /// Co-attention context radius.
    #[arg(long, default_value_t = 3)]
    window: usize,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Vote,
    Logits,
    Probs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodOrAllArg {
    Vote,
    Logits,
    Probs,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Frame,
    Video,
}

#[derive(clap::Args)]
struct AggregateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EnsembleArgs {
    /// Prediction file; repeat the flag once per model.
    #[arg(long, required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    level: LevelArg,
    #[arg(long, value_enum, default_value = "vote")]
    method: MethodOrAllArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 24)]
    videos: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    k: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Aggregate(args) => commands::aggregate(args),
        Command::Ensemble(args) => commands::ensemble(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Synth(args) => commands::synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
