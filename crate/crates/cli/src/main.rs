//! `splatseg` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error,
//! 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "splatseg",
    version,
    about = "Segmentable Gaussian splatting from posed images and instance masks"
)]
struct Cli {
    /// Worker threads for rendering (defaults to all cores).
    #[arg(long, global = true, env = "SPLATSEG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-object dataset.
    Synth(SynthArgs),
    /// Train a scene model on a dataset directory.
    Train(TrainArgs),
    /// Render a model from one camera to a PPM image.
    Render(RenderArgs),
    /// Render an instance mask from one camera.
    Segment2d(Segment2dArgs),
    /// Extract the Gaussians of the object under a prompt mask.
    Extract3d(Extract3dArgs),
    /// Score predicted instance masks against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub objects: usize,
    #[arg(long, default_value_t = 100)]
    pub per_object: usize,
    #[arg(long, default_value_t = 20)]
    pub views: usize,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 1.2)]
    pub spacing: f64,
    #[arg(long, default_value_t = 0.35)]
    pub radius: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Where camera poses come from: a cameras file or a dataset directory.
#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct CameraSource {
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Dataset directory; its cameras.txt is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to loss_history.csv beside --out.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Hold out every K-th view (indices K-1, 2K-1, ...) from training.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub holdout_every: Option<u64>,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: CameraSource,
    #[arg(long)]
    pub camera_id: u32,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct Segment2dArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: CameraSource,
    #[arg(long)]
    pub camera_id: u32,
    /// Similarity threshold; overrides the config.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct Extract3dArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: CameraSource,
    #[arg(long)]
    pub camera_id: u32,
    /// Binary PGM mask marking the object in the camera's view.
    #[arg(long)]
    pub prompt_mask: PathBuf,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_masks: PathBuf,
    #[arg(long)]
    pub gt_masks: PathBuf,
    /// Boundary band radius in pixels.
    #[arg(long, default_value_t = splatseg::metrics::DEFAULT_BOUNDARY_RADIUS)]
    pub boundary: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<splatseg::Error>()) {
        Some(splatseg::Error::NonFinite { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global thread pool is configured once");
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Render(a) => commands::render(a),
        Command::Segment2d(a) => commands::segment2d(a),
        Command::Extract3d(a) => commands::extract3d(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
