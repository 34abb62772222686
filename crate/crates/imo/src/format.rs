//! Dataset and trajectory files.
//!
//! A dataset directory holds `imu.csv`, `cmd.csv`, `gt.csv` and `meta.json`.
//! Estimated trajectories (`est.csv`) use the ground-truth column layout.
//! Floats are written with 17 significant digits, quaternions as Hamilton
//! `w, x, y, z`.

use std::fs;
use std::path::{Path, PathBuf};

use imo_core::sim::{Dataset, GroundTruthSample, ImuSample, SimConfig, ThrustCommand, TrackKind};
use imo_core::so3::Rotation;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const DATASET_FORMAT_VERSION: u32 = 1;

pub const IMU_HEADER: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];
pub const CMD_HEADER: [&str; 2] = ["t", "c"];
pub const STATE_HEADER: [&str; 17] = [
    "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "bax", "bay", "baz", "bgx",
    "bgy", "bgz",
];

/// A file that could not be read or parsed.
#[derive(Debug, thiserror::Error)]
#[error("{}{}: {reason}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
pub struct DataError {
    pub path: PathBuf,
    /// 1-based line, header included.
    pub line: Option<usize>,
    pub reason: String,
}

impl DataError {
    pub fn new(path: &Path, line: Option<usize>, reason: impl Into<String>) -> Self {
        Self {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }
}

/// Writes `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [f64; N]>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()
}

fn read_rows<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<[f64; N]>, DataError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::new(path, None, e.to_string()))?;
    let got = r
        .headers()
        .map_err(|e| DataError::new(path, Some(1), e.to_string()))?
        .clone();
    if got.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(DataError::new(
            path,
            Some(1),
            format!("header {:?}, expected {:?}", got.iter().collect::<Vec<_>>(), header),
        ));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| DataError::new(path, Some(line), e.to_string()))?;
        if rec.len() != N {
            return Err(DataError::new(path, Some(line), format!("{} fields, expected {N}", rec.len())));
        }
        let mut row = [0.0_f64; N];
        for (slot, field) in row.iter_mut().zip(rec.iter()) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| DataError::new(path, Some(line), format!("`{field}` is not a number")))?;
            if !slot.is_finite() {
                return Err(DataError::new(path, Some(line), format!("non-finite value `{field}`")));
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn state_row(s: &GroundTruthSample) -> [f64; 17] {
    let q = s.attitude.to_quaternion_wxyz();
    [
        s.t,
        s.position.x,
        s.position.y,
        s.position.z,
        q[0],
        q[1],
        q[2],
        q[3],
        s.velocity.x,
        s.velocity.y,
        s.velocity.z,
        s.accel_bias.x,
        s.accel_bias.y,
        s.accel_bias.z,
        s.gyro_bias.x,
        s.gyro_bias.y,
        s.gyro_bias.z,
    ]
}

/// Writes a state trajectory in the `gt.csv` / `est.csv` layout.
pub fn write_states(path: &Path, states: &[GroundTruthSample]) -> std::io::Result<()> {
    write_rows(path, STATE_HEADER, states.iter().map(state_row))
}

pub fn read_states(path: &Path) -> Result<Vec<GroundTruthSample>, DataError> {
    let rows = read_rows(path, STATE_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let v = |o: usize| Vector3::new(r[o], r[o + 1], r[o + 2]);
        let q = [r[4], r[5], r[6], r[7]];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DataError::new(path, Some(k + 2), format!("quaternion norm {norm}")));
        }
        let attitude = Rotation::from_quaternion_wxyz(q)
            .map_err(|e| DataError::new(path, Some(k + 2), e.to_string()))?;
        out.push(GroundTruthSample {
            t: r[0],
            position: v(1),
            attitude,
            velocity: v(8),
            accel_bias: v(11),
            gyro_bias: v(14),
        });
    }
    check_increasing(path, out.iter().map(|s| s.t))?;
    Ok(out)
}

fn check_increasing(path: &Path, times: impl Iterator<Item = f64>) -> Result<(), DataError> {
    let mut last = f64::NEG_INFINITY;
    for (k, t) in times.enumerate() {
        if !(t > last) {
            return Err(DataError::new(path, Some(k + 2), "timestamps not strictly increasing"));
        }
        last = t;
    }
    Ok(())
}

/// Configuration echo stored in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub seed: u64,
    pub track: String,
    pub duration: f64,
    pub imu_rate: f64,
    pub integration_rate: f64,
    pub drag: [f64; 3],
    pub max_thrust: f64,
    pub max_body_rate: f64,
    pub noise: crate::config::Noise,
    pub initial_accel_bias_std: f64,
    pub initial_gyro_bias_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoint_speed: Option<f64>,
}

impl DatasetMeta {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let (waypoints, waypoint_speed) = match &cfg.track {
            TrackKind::Waypoints { points, speed } => {
                (Some(points.iter().map(|p| [p.x, p.y, p.z]).collect()), Some(*speed))
            }
            _ => (None, None),
        };
        Self {
            format_version: DATASET_FORMAT_VERSION,
            seed: cfg.seed,
            track: cfg.track.name().to_string(),
            duration: cfg.duration,
            imu_rate: cfg.imu_rate,
            integration_rate: cfg.integration_rate,
            drag: cfg.drag,
            max_thrust: cfg.max_thrust,
            max_body_rate: cfg.max_body_rate,
            noise: cfg.noise.into(),
            initial_accel_bias_std: cfg.initial_accel_bias_std,
            initial_gyro_bias_std: cfg.initial_gyro_bias_std,
            waypoints,
            waypoint_speed,
        }
    }
}

/// Writes the four dataset files into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, dataset: &Dataset, config: &SimConfig) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(
        &dir.join("imu.csv"),
        IMU_HEADER,
        dataset.imu.iter().map(|s| {
            [s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z]
        }),
    )?;
    write_rows(&dir.join("cmd.csv"), CMD_HEADER, dataset.cmds.iter().map(|c| [c.t, c.thrust]))?;
    write_states(&dir.join("gt.csv"), &dataset.gt)?;
    let meta = serde_json::to_string_pretty(&DatasetMeta::from_config(config))?;
    fs::write(dir.join("meta.json"), meta + "\n")
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta, DataError> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| DataError::new(&path, None, e.to_string()))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| DataError::new(&path, Some(e.line()), e.to_string()))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(DataError::new(
            &path,
            None,
            format!("format_version {}, expected {DATASET_FORMAT_VERSION}", meta.format_version),
        ));
    }
    Ok(meta)
}

/// Reads and validates a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<(Dataset, DatasetMeta), DataError> {
    let meta = read_meta(dir)?;
    let imu_path = dir.join("imu.csv");
    let imu: Vec<ImuSample> = read_rows(&imu_path, IMU_HEADER)?
        .into_iter()
        .map(|r| ImuSample {
            t: r[0],
            gyro: Vector3::new(r[1], r[2], r[3]),
            accel: Vector3::new(r[4], r[5], r[6]),
        })
        .collect();
    check_increasing(&imu_path, imu.iter().map(|s| s.t))?;
    let cmd_path = dir.join("cmd.csv");
    let cmds: Vec<ThrustCommand> = read_rows(&cmd_path, CMD_HEADER)?
        .into_iter()
        .map(|r| ThrustCommand { t: r[0], thrust: r[1] })
        .collect();
    let gt = read_states(&dir.join("gt.csv"))?;
    let dataset = Dataset {
        imu_rate: meta.imu_rate,
        imu,
        cmds,
        gt,
    };
    dataset
        .validate()
        .map_err(|e| DataError::new(dir, None, e.to_string()))?;
    Ok((dataset, meta))
}

/// Reads waypoints from a headerless or `x,y,z`-headed CSV file.
pub fn read_waypoints(path: &Path) -> Result<Vec<Vector3<f64>>, DataError> {
    let rows = read_rows(path, ["x", "y", "z"])?;
    Ok(rows.into_iter().map(Vector3::from).collect())
}
