//! `tamilnist`: generate the font-bootstrapped vowel dataset, train the FC or
//! CNN classifier on it, and evaluate on held-out or handwritten images.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tamilnist::augment::PolicyError;
use tamilnist::dataio::DataError;
use tamilnist::nn::{ModelKind, NnError};
use tamilnist::traineval::TrainError;

/// Seed used whenever `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(name = "tamilnist", version, about = "Tamil vowel dataset generation and classifier training")]
pub struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render, augment, filter and split a dataset into IDX files.
    Generate(GenerateArgs),
    /// Train a classifier on a generated dataset.
    Train(TrainArgs),
    /// Top-k evaluation of a checkpoint on IDX or handwritten data.
    Eval(EvalArgs),
    /// Rank all classes for a single image.
    Infer(InferArgs),
    /// Describe IDX files or a checkpoint and preview samples as ASCII.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Directory of .ttf/.otf fonts (optionally with fonts.toml scales).
    #[arg(long, required_unless_present = "manifest")]
    pub fonts_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Regenerate exactly the dataset a manifest describes; other generation flags are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Candidate images before the overflow filter.
    #[arg(long, default_value_t = 60_000)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.35)]
    pub rotate_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    pub rotate_translate_fraction: f64,
    /// Maximum absolute rotation, degrees.
    #[arg(long, default_value_t = 15.0)]
    pub max_angle: f64,
    /// Maximum absolute translation per axis, pixels.
    #[arg(long, default_value_t = 5)]
    pub max_shift: i32,
    /// Target ink height in pixels before per-class scaling.
    #[arg(long, default_value_t = 20)]
    pub ink_height: u32,
    /// Per-class rendering multiplier, e.g. `au=0.85` (repeatable).
    #[arg(long = "class-scale", value_name = "CLASS=SCALE")]
    pub class_scales: Vec<String>,
    /// Border pixels at or above this value mark an overflow.
    #[arg(long, default_value_t = 32)]
    pub overflow_threshold: u8,
    #[arg(long, default_value_t = 1)]
    pub border_width: usize,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory holding the IDX files written by `generate`.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "cnn")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Seeds weight initialisation and batch shuffling.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Stop after this many epochs without validation improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Output checkpoint (default: <data-dir>/<model>.tvnn).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Text report; a .json sidecar is written beside it (default: checkpoint path with .txt).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluate on the test split of this IDX directory.
    #[arg(long, conflicts_with = "handwritten_dir", required_unless_present = "handwritten_dir")]
    pub data_dir: Option<PathBuf>,
    /// Evaluate on labelled PNG/PGM images.
    #[arg(long)]
    pub handwritten_dir: Option<PathBuf>,
    /// Invert handwritten images (dark ink on light paper).
    #[arg(long)]
    pub invert: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub topk: Vec<usize>,
    /// Text report path (default: eval.txt beside the checkpoint).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Invert the image (dark ink on light paper).
    #[arg(long)]
    pub invert: bool,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// IDX directory to describe.
    #[arg(long, required_unless_present = "checkpoint")]
    pub data_dir: Option<PathBuf>,
    /// Checkpoint to describe.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Which split to preview.
    #[arg(long, default_value = "train", value_parser = ["train", "test"])]
    pub split: String,
    /// Number of samples to preview.
    #[arg(long, default_value_t = 3)]
    pub preview: usize,
    /// Index of the first previewed sample.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Maps an error chain to the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            match e {
                TrainError::NonFiniteLoss { .. } => return EXIT_NUMERIC,
                TrainError::InvalidConfig(_) => return EXIT_USAGE,
                _ => {}
            }
        }
        if cause.downcast_ref::<PolicyError>().is_some() || cause.downcast_ref::<commands::UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(DataError::Policy(_) | DataError::BadFraction(_)) = cause.downcast_ref::<DataError>() {
            return EXIT_USAGE;
        }
        if cause.downcast_ref::<NnError>().is_some() {
            return EXIT_DATA;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
