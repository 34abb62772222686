//! Subcommand implementations.
//!
//! A complete pipeline on a short flight:
//!
//! ```
//! use imo::cli::{EvalArgs, RunArgs, SimulateArgs};
//! use imo::commands::{eval, run, simulate};
//! # let root = std::env::temp_dir().join(format!("imo-doc-{}", std::process::id()));
//! # let args = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
//! use clap::Parser;
//! let cli = |a: &str| imo::cli::Cli::try_parse_from(args(a)).unwrap().command;
//! let d = root.join("flight");
//! let r = root.join("oracle");
//!
//! let imo::cli::Command::Simulate(sim) =
//!     cli(&format!("imo simulate --track lemniscate --duration 20 --seed 7 --out {}", d.display()))
//! else { unreachable!() };
//! simulate(&sim).unwrap();
//!
//! let imo::cli::Command::Run(run_args) =
//!     cli(&format!("imo run --dataset {} --provider oracle --seed 7 --out {}", d.display(), r.display()))
//! else { unreachable!() };
//! run(&run_args.resolve().unwrap()).unwrap();
//!
//! let imo::cli::Command::Eval(eval_args) = cli(&format!(
//!     "imo eval --est {} --gt {} --out {}",
//!     r.join("est.csv").display(), d.display(), r.display()
//! )) else { unreachable!() };
//! let metrics = eval(&eval_args).unwrap();
//! assert!(metrics.ate_t_m < 0.15);
//! # std::fs::remove_dir_all(&root).unwrap();
//! ```

use std::path::Path;
use std::time::Instant;

use imo_core::eval::{self, AlignedPair, Pose};
use imo_core::filter::{run_filter, Estimate, UpdateStats};
use imo_core::providers::{
    concatenate_displacements, model_displacement, tcn_displacement, window_from_ground_truth,
    DeadReckoning, DisplacementProvider, ModelProvider, OracleProvider, PositionSample, TcnProvider,
};
use imo_core::sim::{
    displacement_oracle, rng_stream, simulate as fly, Dataset, GroundTruthSample, RngStream,
    SimConfig, TrackKind,
};
use imo_core::so3::Rotation;
use imo_core::tcn::TcnModel;
use nalgebra::Vector3;
use serde_json::json;

use crate::cli::{CliError, EvalArgs, InspectArgs, SimulateArgs};
use crate::config::{Mode, ModelInputs, NoiseOverrides, ProviderKind, RunConfig};
use crate::format::{read_dataset, read_states, read_waypoints, write_dataset, write_states};
use crate::report::{table_header, Metrics};
use crate::weights::load_weights;

pub const RUN_META_VERSION: u32 = 1;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn unwritable(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("cannot write {}: {e}", path.display()))
}

pub fn sim_config(args: &SimulateArgs) -> Result<SimConfig, CliError> {
    let track = match &args.waypoints {
        Some(path) => TrackKind::Waypoints {
            points: read_waypoints(path).map_err(data)?,
            speed: args.speed,
        },
        None => TrackKind::from_name(&args.track).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let mut cfg = if args.ideal {
        SimConfig::ideal(track, args.duration, args.seed)
    } else {
        SimConfig::new(track, args.duration, args.seed)
    };
    if let Some(d) = &args.drag {
        cfg.drag = [d[0], d[1], d[2]];
    }
    cfg.imu_rate = args.imu_rate;
    cfg.integration_rate = cfg.integration_rate.max(args.imu_rate);
    cfg.noise = args.noise.overrides().apply(cfg.noise);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn simulate(args: &SimulateArgs) -> Result<Dataset, CliError> {
    let cfg = sim_config(args)?;
    let dataset = fly(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    write_dataset(&args.out, &dataset, &cfg).map_err(|e| unwritable(&args.out, e))?;
    println!(
        "duration {:.2} s, top speed {:.2} m/s, path length {:.1} m",
        dataset.duration(),
        dataset.top_speed(),
        dataset.path_length()
    );
    Ok(dataset)
}

/// What `run` produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Vec<GroundTruthSample>,
    /// Filter mode only.
    pub stats: Option<UpdateStats>,
    /// Concat mode only: number of chained windows.
    pub windows: Option<usize>,
}

fn as_row(e: &Estimate) -> GroundTruthSample {
    GroundTruthSample {
        t: e.t,
        position: e.nav.position,
        attitude: e.nav.attitude,
        velocity: e.nav.velocity,
        accel_bias: e.nav.accel_bias,
        gyro_bias: e.nav.gyro_bias,
    }
}

fn filter_run(
    cfg: &RunConfig,
    dataset: &Dataset,
    noise: imo_core::sim::NoiseParams,
    model: Option<&TcnModel>,
) -> Result<RunOutput, CliError> {
    let fc = cfg.filter_config(noise);
    let sigma = fc.noise.measurement;
    let mut provider: Box<dyn DisplacementProvider + '_> = match cfg.provider {
        ProviderKind::Oracle => Box::new(OracleProvider::new(&dataset.gt, sigma, cfg.seed)),
        ProviderKind::Model => match cfg.model_inputs {
            ModelInputs::Gt => Box::new(ModelProvider::ground_truth(dataset, cfg.window, sigma)),
            ModelInputs::Filter => Box::new(ModelProvider::closed_loop(sigma)),
        },
        ProviderKind::Tcn => Box::new(TcnProvider::new(model.expect("weights loaded"), sigma)),
        ProviderKind::None => Box::new(DeadReckoning),
    };
    let run = run_filter(dataset, &mut *provider, &fc).map_err(data)?;
    let s = &run.stats;
    log::info!(
        "{} update ticks: {} accepted, {} before the clone window filled, {} gated, {} invalid, {} without measurement",
        s.ticks,
        s.accepted,
        s.rejected_no_clone,
        s.rejected_outlier,
        s.rejected_invalid,
        s.provider_failures
    );
    Ok(RunOutput {
        trajectory: run.trajectory.iter().map(as_row).collect(),
        stats: Some(run.stats),
        windows: None,
    })
}

/// Chains displacements over back-to-back windows from the first
/// ground-truth position. Only positions are estimated.
fn concat_run(
    cfg: &RunConfig,
    dataset: &Dataset,
    sigma: f64,
    model: Option<&TcnModel>,
) -> Result<RunOutput, CliError> {
    let n = (cfg.window * dataset.imu_rate).round() as usize;
    if n == 0 {
        return Err(CliError::Usage("window shorter than one IMU sample".into()));
    }
    let mut rng = rng_stream(cfg.seed, RngStream::Measurement);
    let mut measurements = Vec::new();
    for k in 0..dataset.imu.len() / n {
        let t_i = dataset.imu[k * n].t;
        let m = match cfg.provider {
            ProviderKind::Oracle => {
                let t_j = dataset.gt[(k + 1) * n].t;
                displacement_oracle(&dataset.gt, t_i, t_j, sigma, &mut rng)
            }
            ProviderKind::Model => {
                window_from_ground_truth(dataset, t_i, cfg.window).map(|w| model_displacement(&w, sigma))
            }
            ProviderKind::Tcn => window_from_ground_truth(dataset, t_i, cfg.window)
                .and_then(|w| tcn_displacement(&w, model.expect("weights loaded"), sigma)),
            ProviderKind::None => unreachable!("rejected by RunConfig::validate"),
        }
        .map_err(data)?;
        measurements.push(m);
    }
    let g0 = &dataset.gt[0];
    let chain = concatenate_displacements(
        PositionSample {
            t: g0.t,
            position: g0.position,
        },
        &measurements,
        dataset.imu_rate,
    );
    let trajectory = chain
        .iter()
        .map(|p| GroundTruthSample {
            t: p.t,
            position: p.position,
            attitude: Rotation::identity(),
            velocity: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        })
        .collect();
    Ok(RunOutput {
        trajectory,
        stats: None,
        windows: Some(measurements.len()),
    })
}

/// Runs `cfg` and writes `est.csv` and `run_meta.json` into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate().map_err(CliError::Usage)?;
    let started = Instant::now();
    let (dataset, meta) = read_dataset(&cfg.dataset).map_err(data)?;
    let model = match (&cfg.weights, cfg.provider) {
        (Some(path), ProviderKind::Tcn) => Some(load_weights(path).map_err(data)?),
        _ => None,
    };
    let noise = cfg.noise.apply(meta.noise.into());
    let output = match cfg.mode {
        Mode::Filter => filter_run(cfg, &dataset, noise, model.as_ref())?,
        Mode::Concat => concat_run(cfg, &dataset, noise.measurement, model.as_ref())?,
    };
    let wall = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&cfg.out).map_err(|e| unwritable(&cfg.out, e))?;
    let est = cfg.out.join("est.csv");
    write_states(&est, &output.trajectory).map_err(|e| unwritable(&est, e))?;
    let resolved = RunConfig {
        noise: NoiseOverrides::all(noise),
        ..cfg.clone()
    };
    let mut doc = json!({
        "format_version": RUN_META_VERSION,
        "config": resolved,
        "wall_time_s": wall,
    });
    if let Some(s) = &output.stats {
        doc["stats"] = json!({
            "ticks": s.ticks,
            "accepted": s.accepted,
            "rejected": s.rejected(),
            "rejected_no_clone": s.rejected_no_clone,
            "rejected_outlier": s.rejected_outlier,
            "rejected_invalid": s.rejected_invalid,
            "provider_failures": s.provider_failures,
        });
        println!("update ticks {}, accepted {}, rejected {}", s.ticks, s.accepted, s.rejected());
    }
    if let Some(w) = output.windows {
        doc["stats"] = json!({ "windows": w });
        println!("chained windows {w}");
    }
    let meta_path = cfg.out.join("run_meta.json");
    let text = serde_json::to_string_pretty(&doc).expect("run metadata serializes") + "\n";
    std::fs::write(&meta_path, text).map_err(|e| unwritable(&meta_path, e))?;
    Ok(output)
}

fn poses(states: &[GroundTruthSample]) -> Vec<Pose> {
    states
        .iter()
        .map(|s| Pose {
            t: s.t,
            position: s.position,
            attitude: s.attitude,
        })
        .collect()
}

/// Whether `est` sits next to a `run_meta.json` from a concat run.
fn from_concat_run(est: &Path) -> bool {
    let Some(dir) = est.parent() else { return false };
    let Ok(text) = std::fs::read_to_string(dir.join("run_meta.json")) else {
        return false;
    };
    serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v["config"]["mode"].as_str().map(|m| m == "concat"))
        .unwrap_or(false)
}

pub fn eval(args: &EvalArgs) -> Result<Metrics, CliError> {
    let gt_path = if args.gt.is_dir() { args.gt.join("gt.csv") } else { args.gt.clone() };
    let gt = read_states(&gt_path).map_err(data)?;
    let est = read_states(&args.est).map_err(data)?;
    let pair = AlignedPair::new(&poses(&est), &poses(&gt)).map_err(data)?;
    if pair.len() < 2 {
        return Err(CliError::Data(format!(
            "{} and {} share fewer than two timestamps",
            args.est.display(),
            gt_path.display()
        )));
    }
    let position_only = args.position_only || from_concat_run(&args.est);
    let ate_t = eval::ate_translation(&pair).map_err(data)?;
    let ate_r = if position_only {
        None
    } else {
        Some(eval::ate_rotation(&pair).map_err(data)?)
    };
    let rel = eval::relative_errors(&pair, &args.distances).map_err(data)?;
    for d in &rel.skipped {
        log::warn!("{d} m is longer than the {:.1} m path; skipped", pair.path_length());
    }
    let metrics = Metrics::new(ate_t, ate_r, &rel);
    std::fs::create_dir_all(&args.out).map_err(|e| unwritable(&args.out, e))?;
    metrics.write(&args.out).map_err(|e| unwritable(&args.out, e))?;
    let label = args.label.clone().unwrap_or_else(|| {
        args.est
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "estimate".into())
    });
    println!("{}", table_header());
    println!("{}", metrics.table_row(&label));
    Ok(metrics)
}

pub fn inspect_weights(args: &InspectArgs) -> Result<TcnModel, CliError> {
    let model = load_weights(&args.weights).map_err(data)?;
    let m = model.meta();
    println!("channels         {}", m.channels);
    println!("window           {}", m.window);
    println!("kernel           {}", m.kernel);
    println!("dilations        {:?}", m.dilations);
    println!("hidden channels  {}", m.hidden_channels);
    println!("receptive field  {}", model.receptive_field());
    println!("parameters       {}", model.parameter_count());
    println!("norm mean        {:?}", model.normalization().mean);
    println!("norm std         {:?}", model.normalization().std);
    Ok(model)
}
