//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ModelInputs, Mode, NoiseOverrides, ProviderKind, RunConfig};

/// Failure of a subcommand, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config or unwritable output. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or inconsistent input data. Exit code 3.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "imo", version, about = "Inertial odometry with learned displacement updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly a simulated quadrotor and write a dataset directory.
    Simulate(SimulateArgs),
    /// Run the filter (or a concatenation baseline) on a dataset.
    Run(RunArgs),
    /// Compare an estimated trajectory with ground truth.
    Eval(EvalArgs),
    /// Print the architecture of a weight file.
    InspectWeights(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "lemniscate",
          value_parser = ["hover", "lemniscate", "racetrack"])]
    pub track: String,
    /// CSV with an `x,y,z` header; flies a closed spline through the points.
    #[arg(long, conflicts_with = "track")]
    pub waypoints: Option<PathBuf>,
    /// Cruise speed along `--waypoints`, m/s.
    #[arg(long, default_value_t = imo_core::sim::RACETRACK_SPEED, requires = "waypoints")]
    pub speed: f64,
    /// Seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Body-frame drag coefficients `dx,dy,dz`, 1/s.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub drag: Option<Vec<f64>>,
    /// No noise, no biases, no drag (explicit `--drag` still applies).
    #[arg(long)]
    pub ideal: bool,
    /// Hz
    #[arg(long, default_value_t = 100.0)]
    pub imu_rate: f64,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct NoiseArgs {
    /// Accelerometer noise, m/s².
    #[arg(long)]
    pub accel_noise: Option<f64>,
    /// Gyroscope noise, rad/s.
    #[arg(long)]
    pub gyro_noise: Option<f64>,
    /// Accelerometer bias random walk, m/s²/√s.
    #[arg(long)]
    pub accel_bias_walk: Option<f64>,
    /// Gyroscope bias random walk, rad/s/√s.
    #[arg(long)]
    pub gyro_bias_walk: Option<f64>,
    /// Displacement measurement noise, m.
    #[arg(long)]
    pub meas_noise: Option<f64>,
}

impl NoiseArgs {
    pub fn overrides(&self) -> NoiseOverrides {
        NoiseOverrides {
            accel: self.accel_noise,
            gyro: self.gyro_noise,
            accel_bias_walk: self.accel_bias_walk,
            gyro_bias_walk: self.gyro_bias_walk,
            measurement: self.meas_noise,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub provider: ProviderKind,
    /// TCN weight file, required for `--provider tcn`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "filter")]
    pub mode: Mode,
    /// Orientation and velocity source for `--provider model`.
    #[arg(long, value_enum, default_value = "gt")]
    pub model_inputs: ModelInputs,
    /// Filter noise; unset values are taken from the dataset.
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Hz
    #[arg(long, default_value_t = 20.0)]
    pub update_rate: f64,
    /// Seconds.
    #[arg(long, default_value_t = 0.5)]
    pub window: f64,
    #[arg(long, default_value_t = 10)]
    pub clones: usize,
    /// Accept every update regardless of its innovation.
    #[arg(long)]
    pub no_gating: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config or `run_meta.json`; its values override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let cfg = RunConfig {
            dataset: self.dataset.clone().unwrap_or_default(),
            provider: self.provider,
            weights: self.weights.clone(),
            mode: self.mode,
            model_inputs: self.model_inputs,
            noise: self.noise.overrides(),
            update_rate: self.update_rate,
            window: self.window,
            clones: self.clones,
            gating: !self.no_gating,
            seed: self.seed,
            out: self.out.clone().unwrap_or_default(),
        };
        let cfg = match &self.config {
            Some(path) => cfg.overlay_file(path).map_err(CliError::Usage)?,
            None => cfg,
        };
        if cfg.dataset.as_os_str().is_empty() {
            return Err(CliError::Usage("--dataset is required".into()));
        }
        if cfg.out.as_os_str().is_empty() {
            return Err(CliError::Usage("--out is required".into()));
        }
        cfg.validate().map_err(CliError::Usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Estimated trajectory CSV.
    #[arg(long)]
    pub est: PathBuf,
    /// Ground-truth CSV, or a dataset directory holding `gt.csv`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Output directory for `metrics.json` and `plot_rel.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Sub-trajectory lengths, m.
    #[arg(long, value_delimiter = ',', default_values_t = imo_core::eval::DEFAULT_DISTANCES)]
    pub distances: Vec<f64>,
    /// Skip rotation metrics. Implied when the estimate came from a
    /// concatenation run.
    #[arg(long)]
    pub position_only: bool,
    /// Row label for the printed table.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub weights: PathBuf,
}
