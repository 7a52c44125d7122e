//! Batch front end for the camera-IMU calibration toolkit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CmdError;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "camimu",
    about = "Camera-IMU calibration: intrinsics, IMU noise and deterministic errors, \
             pre-integration and extrinsic rotation",
    version
)]
struct Cli {
    /// Key=value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for reports and CSVs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for simulation and noise substreams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Huber threshold in degrees for the extrinsic solve.
    #[arg(long, global = true)]
    r_thr_deg: Option<f64>,

    /// Camera pose convention of the input file: c2w or w2c.
    #[arg(long, global = true)]
    pose_convention: Option<String>,

    /// Gravity magnitude, m/s².
    #[arg(long, global = true)]
    gravity: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate,
    /// Closed-form camera intrinsics + distortion from planar views (JSONL).
    CalibrateCamera {
        views: PathBuf,
        /// Include the estimated skew in the assembled K of the report.
        #[arg(long)]
        with_skew: bool,
    },
    /// Allan-variance noise identification from a static IMU recording.
    Allan { imu: PathBuf },
    /// Deterministic IMU calibration from a rotate-and-hold recording.
    CalibrateImu { imu: PathBuf },
    /// Extrinsic rotation (and translation, given oracle states) from
    /// IMU + camera-pose recordings.
    CalibrateExtrinsics {
        imu: PathBuf,
        cam_poses: PathBuf,
        /// ground_truth.json supplying per-frame states for the translation solve.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Pre-integrate the IMU between the listed frame times.
    Preintegrate { imu: PathBuf, frames: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CmdError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| CmdError::new(1, format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r_thr) = cli.r_thr_deg {
        config.r_thr_deg = r_thr;
    }
    if let Some(convention) = &cli.pose_convention {
        config.pose_convention =
            config::parse_convention(convention).map_err(|e| CmdError::new(1, format!("{e:#}")))?;
    }
    if let Some(g) = cli.gravity {
        config.gravity = g;
    }
    config
        .validate()
        .map_err(|e| CmdError::new(1, format!("{e:#}")))?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Simulate => commands::cmd_simulate(&cli.out, &config),
        Command::CalibrateCamera { views, with_skew } => {
            commands::cmd_calibrate_camera(views, &cli.out, *with_skew)
        }
        Command::Allan { imu } => commands::cmd_allan(imu, &cli.out, &config),
        Command::CalibrateImu { imu } => commands::cmd_calibrate_imu(imu, &cli.out, &config),
        Command::CalibrateExtrinsics {
            imu,
            cam_poses,
            ground_truth,
        } => commands::cmd_calibrate_extrinsics(
            imu,
            cam_poses,
            ground_truth.as_ref(),
            &cli.out,
            &config,
        ),
        Command::Preintegrate { imu, frames } => commands::cmd_preintegrate(imu, frames, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
