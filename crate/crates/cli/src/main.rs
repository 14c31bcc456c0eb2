//! `poseact`: target-specific action classification pipeline.
//!
//! Subcommands chain through files: `synth` generates inputs, `track` fuses
//! the target track, `featurize` turns annotated clips into pose-evolution
//! tensors, `train`/`eval` handle the classifier, `gradcheck` verifies the
//! backward pass, and `sweep-channels` reruns training across time-encoding
//! channel counts.

mod commands;
mod render;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{GlobalOverrides, Settings};

/// Exit codes: 0 success, 2 config error, 3 input error.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {}", m),
            CliError::Input(m) => write!(f, "input error: {}", m),
            CliError::Internal(m) => write!(f, "{}", m),
        }
    }
}

impl From<poseact_core::ingest::IngestError> for CliError {
    fn from(e: poseact_core::ingest::IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "poseact",
    version,
    about = "Target-specific action classification pipeline"
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root random seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Time-encoding channels per joint.
    #[arg(long, global = true)]
    channels: Option<usize>,
    /// Frame downscale factor for pose-evolution maps.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// IoU floor for short-term linking.
    #[arg(long = "tau-iou", global = true)]
    tau_iou: Option<f64>,
    /// Relative fusion threshold factor against the median pairwise distance.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link detections into tracklets and fuse the target track.
    Track(commands::TrackArgs),
    /// Cut an annotated track into clips and render pose-evolution tensors.
    Featurize(commands::FeaturizeArgs),
    /// Train the action classifier on featurized clips.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint on a featurized split.
    Eval(commands::EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Generate synthetic inputs with known ground truth.
    #[command(subcommand)]
    Synth(commands::SynthCommand),
    /// Train across several channel counts and report accuracy per count.
    SweepChannels(commands::SweepArgs),
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let overrides = GlobalOverrides {
        seed: cli.seed,
        channels: cli.channels,
        scale: cli.scale,
        tau_iou: cli.tau_iou,
        alpha: cli.alpha,
    };
    let settings = Settings::resolve(cli.config.as_deref(), &overrides)?;
    let out_dir = |name: &str| -> Result<PathBuf, CliError> {
        let dir = cli
            .out
            .clone()
            .ok_or_else(|| CliError::Config(format!("{} needs --out <dir>", name)))?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {}", dir.display(), e)))?;
        Ok(dir)
    };
    match cli.command {
        Command::Track(args) => commands::run_track(&args, &settings, &out_dir("track")?),
        Command::Featurize(args) => {
            commands::run_featurize(&args, &settings, &out_dir("featurize")?)
        }
        Command::Train(args) => commands::run_train(&args, &settings, &out_dir("train")?),
        Command::Eval(args) => commands::run_eval(&args, &out_dir("eval")?),
        Command::Gradcheck(args) => commands::run_gradcheck(&args, &settings, cli.out.as_deref()),
        Command::Synth(kind) => commands::run_synth(&kind, &settings, &out_dir("synth")?),
        Command::SweepChannels(args) => {
            commands::run_sweep(&args, &settings, cli.scale, &out_dir("sweep-channels")?)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
