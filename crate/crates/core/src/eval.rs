//! Trajectory error metrics.
//!
//! Absolute errors are plain RMSEs over matched timestamps with no alignment,
//! because every run starts at the true initial position. Relative errors
//! align each sub-trajectory's start pose to ground truth and measure the
//! error at the point where ground truth has travelled a given distance.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::so3::Rotation;

/// Largest ground-truth gap an estimate may be interpolated across, s.
pub const MAX_INTERPOLATION_GAP: f64 = 0.1;

/// Default sub-trajectory lengths for relative errors, m.
pub const DEFAULT_DISTANCES: [f64; 4] = [10.0, 20.0, 40.0, 60.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub position: Vector3<f64>,
    pub attitude: Rotation,
}

/// Estimate and ground truth on common timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub est: Vec<Pose>,
    pub gt: Vec<Pose>,
}

impl AlignedPair {
    /// Resamples `gt` onto the timestamps of `est`, linearly in position and
    /// geodesically in attitude. Estimates outside the ground-truth span or
    /// across a gap wider than [`MAX_INTERPOLATION_GAP`] are dropped.
    pub fn new(est: &[Pose], gt: &[Pose]) -> Result<Self> {
        const SLACK: f64 = 1e-9;
        let mut pair = Self {
            est: Vec::with_capacity(est.len()),
            gt: Vec::with_capacity(est.len()),
        };
        if gt.is_empty() {
            return Err(Error::Eval("empty ground truth".into()));
        }
        for e in est {
            let upper = gt.partition_point(|g| g.t < e.t - SLACK);
            let matched = if upper < gt.len() && (gt[upper].t - e.t).abs() <= SLACK {
                Some(Pose { t: e.t, ..gt[upper] })
            } else if upper == 0 || upper == gt.len() {
                None
            } else {
                let (a, b) = (&gt[upper - 1], &gt[upper]);
                if b.t - a.t > MAX_INTERPOLATION_GAP {
                    None
                } else {
                    let w = (e.t - a.t) / (b.t - a.t);
                    Some(Pose {
                        t: e.t,
                        position: a.position.lerp(&b.position, w),
                        attitude: a.attitude.slerp(&b.attitude, w),
                    })
                }
            };
            if let Some(g) = matched {
                pair.est.push(*e);
                pair.gt.push(g);
            }
        }
        if pair.est.is_empty() {
            return Err(Error::Eval("estimate and ground truth do not overlap".into()));
        }
        Ok(pair)
    }

    /// Pairs that are already matched sample by sample.
    pub fn matched(est: Vec<Pose>, gt: Vec<Pose>) -> Result<Self> {
        if est.len() != gt.len() {
            return Err(Error::Eval(format!("{} estimates for {} truths", est.len(), gt.len())));
        }
        if est.is_empty() {
            return Err(Error::Eval("empty trajectory pair".into()));
        }
        Ok(Self { est, gt })
    }

    pub fn len(&self) -> usize {
        self.est.len()
    }

    pub fn is_empty(&self) -> bool {
        self.est.is_empty()
    }

    /// Ground-truth path length.
    pub fn path_length(&self) -> f64 {
        self.gt
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }
}

/// `√(1/N Σ‖p − p̂‖²)`, metres.
pub fn ate_translation(pair: &AlignedPair) -> Result<f64> {
    if pair.is_empty() {
        return Err(Error::Eval("empty trajectory pair".into()));
    }
    let sum: f64 = pair
        .est
        .iter()
        .zip(&pair.gt)
        .map(|(e, g)| (e.position - g.position).norm_squared())
        .sum();
    Ok((sum / pair.len() as f64).sqrt())
}

/// `√(1/N Σ‖Log(Rᵀ·R̂)‖²)`, degrees.
pub fn ate_rotation(pair: &AlignedPair) -> Result<f64> {
    if pair.is_empty() {
        return Err(Error::Eval("empty trajectory pair".into()));
    }
    let sum: f64 = pair
        .est
        .iter()
        .zip(&pair.gt)
        .map(|(e, g)| (g.attitude.inverse() * e.attitude).angle().powi(2))
        .sum();
    Ok((sum / pair.len() as f64).sqrt().to_degrees())
}

/// Error distribution for one sub-trajectory length.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceErrors {
    pub distance: f64,
    /// End-point translation error as a percentage of `distance`.
    pub trans_pct: Vec<f64>,
    /// End-point rotation error, degrees.
    pub rot_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrors {
    pub per_distance: Vec<DistanceErrors>,
    /// Requested distances longer than the path.
    pub skipped: Vec<f64>,
}

/// Relative errors for every start index and every requested distance.
pub fn relative_errors(pair: &AlignedPair, distances: &[f64]) -> Result<RelativeErrors> {
    if pair.is_empty() {
        return Err(Error::Eval("empty trajectory pair".into()));
    }
    if let Some(d) = distances.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(Error::Eval(format!("distance {d} must be positive")));
    }
    let mut travelled = Vec::with_capacity(pair.len());
    let mut s = 0.0;
    travelled.push(0.0);
    for w in pair.gt.windows(2) {
        s += (w[1].position - w[0].position).norm();
        travelled.push(s);
    }
    let total = s;

    let mut out = RelativeErrors {
        per_distance: Vec::new(),
        skipped: Vec::new(),
    };
    for &d in distances {
        if d >= total {
            log::warn!("relative error distance {d} m exceeds the path length {total:.1} m; skipped");
            out.skipped.push(d);
            out.per_distance.push(DistanceErrors {
                distance: d,
                trans_pct: Vec::new(),
                rot_deg: Vec::new(),
            });
            continue;
        }
        let mut trans_pct = Vec::new();
        let mut rot_deg = Vec::new();
        let mut j = 0;
        for i in 0..pair.len() {
            j = j.max(i);
            while j < pair.len() && travelled[j] - travelled[i] < d {
                j += 1;
            }
            if j == pair.len() {
                break;
            }
            let (ei, ej) = (&pair.est[i], &pair.est[j]);
            let (gi, gj) = (&pair.gt[i], &pair.gt[j]);
            let align = gi.attitude * ei.attitude.inverse();
            let position = align * (ej.position - ei.position) + gi.position;
            let attitude = align * ej.attitude;
            trans_pct.push(100.0 * (position - gj.position).norm() / d);
            rot_deg.push((gj.attitude.inverse() * attitude).angle().to_degrees());
        }
        out.per_distance.push(DistanceErrors {
            distance: d,
            trans_pct,
            rot_deg,
        });
    }
    Ok(out)
}

/// `eᵀ·P⁻¹·e` for a 3-DoF error; `None` when `P` is not positive definite.
pub fn nees(error: &Vector3<f64>, covariance: &Matrix3<f64>) -> Option<f64> {
    let chol = covariance.cholesky()?;
    Some(error.dot(&chol.solve(error)))
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
