//! Error-state EKF with stochastic cloning.
//!
//! The filter carries the current navigation state plus up to `m` cloned past
//! poses. The error state is ordered
//! `[clone₁(δθ, δp), …, clone_m(δθ, δp), δθ, δv, δp, δb_a, δb_g]`, so the
//! covariance has dimension `6m + 15`. Orientation errors are left
//! perturbations in the world frame: `R = Exp(δθ)·R̂`.
//!
//! IMU samples drive [`FilterState::propagate`]; at every update instant the
//! runner applies a relative-displacement [`FilterState::update`] against the
//! clone taken one window earlier and then clones the current pose with
//! [`FilterState::augment`].

mod propagation;
mod runner;
mod update;

#[doc(hidden)]
pub use propagation::propagate_covariance_dense;
pub use propagation::{nominal_step, process_noise, propagation_jacobians, NOISE_DIM};
pub use runner::{run_filter, run_filter_observed, Estimate, FilterEvent, FilterRun, UpdateStats};
pub use update::{joseph_update, measurement_jacobian, UpdateDiagnostics};

use alloc::collections::VecDeque;
use alloc::string::String;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::sim::NoiseParams;
use crate::so3::Rotation;

/// Size of the current-state error block.
pub const CORE_DIM: usize = 15;
/// Size of one clone's error block (δθ, δp).
pub const CLONE_DIM: usize = 6;

/// Offsets inside the current-state block.
pub mod idx {
    pub const THETA: usize = 0;
    pub const VEL: usize = 3;
    pub const POS: usize = 6;
    pub const ACC_BIAS: usize = 9;
    pub const GYRO_BIAS: usize = 12;
}

/// χ²(3) quantile at 0.999.
pub const CHI2_3DOF_999: f64 = 16.27;

/// Two timestamps closer than this refer to the same instant, s.
pub const CLONE_TIME_TOLERANCE: f64 = 1e-6;

/// Longest accepted propagation step, s.
pub const MAX_PROPAGATION_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub attitude: Rotation,
    pub velocity: Vector3<f64>,
    pub position: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl NavState {
    pub fn is_finite(&self) -> bool {
        self.attitude.matrix().iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.position.iter().all(|c| c.is_finite())
            && self.accel_bias.iter().all(|c| c.is_finite())
            && self.gyro_bias.iter().all(|c| c.is_finite())
    }

    /// Applies a 15-dimensional error-state correction.
    pub fn boxplus(&self, delta: &[f64]) -> Self {
        let v = |o: usize| Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
        Self {
            attitude: self.attitude.boxplus(&v(idx::THETA)),
            velocity: self.velocity + v(idx::VEL),
            position: self.position + v(idx::POS),
            accel_bias: self.accel_bias + v(idx::ACC_BIAS),
            gyro_bias: self.gyro_bias + v(idx::GYRO_BIAS),
        }
    }

    /// 15-dimensional error `self ⊟ other`.
    pub fn boxminus(&self, other: &Self) -> [f64; CORE_DIM] {
        let mut out = [0.0; CORE_DIM];
        let parts = [
            (idx::THETA, self.attitude.boxminus(&other.attitude)),
            (idx::VEL, self.velocity - other.velocity),
            (idx::POS, self.position - other.position),
            (idx::ACC_BIAS, self.accel_bias - other.accel_bias),
            (idx::GYRO_BIAS, self.gyro_bias - other.gyro_bias),
        ];
        for (o, d) in parts {
            out[o..o + 3].copy_from_slice(d.as_slice());
        }
        out
    }
}

/// A cloned past pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloneState {
    pub attitude: Rotation,
    pub position: Vector3<f64>,
    pub t: f64,
}

/// World-frame position change over `[t_i, t_j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementMeasurement {
    pub delta: Vector3<f64>,
    pub t_i: f64,
    pub t_j: f64,
    pub covariance: Matrix3<f64>,
}

/// Why a measurement did not change the state.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Rejection {
    #[error("no clone at t = {t_i:.6} s")]
    NoClone { t_i: f64 },
    #[error("measurement ends at {t_j:.6} s but the filter is at {now:.6} s")]
    TimeMismatch { t_j: f64, now: f64 },
    #[error("innovation Mahalanobis distance² {distance:.3} exceeds gate")]
    Outlier { distance: f64 },
    #[error("numerically invalid measurement: {0}")]
    Invalid(String),
    #[error("provider unavailable: {0}")]
    Provider(String),
}

/// Initial one-sigma uncertainty of the current state, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStd {
    /// rad
    pub attitude: f64,
    /// m/s
    pub velocity: f64,
    /// m
    pub position: f64,
    /// m/s²
    pub accel_bias: f64,
    /// rad/s
    pub gyro_bias: f64,
}

impl Default for InitialStd {
    fn default() -> Self {
        Self {
            attitude: 1e-4,
            velocity: 1e-2,
            position: 1e-4,
            accel_bias: 2e-2,
            gyro_bias: 2e-3,
        }
    }
}

impl InitialStd {
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut diag = DVector::zeros(CORE_DIM);
        for (o, s) in [
            (idx::THETA, self.attitude),
            (idx::VEL, self.velocity),
            (idx::POS, self.position),
            (idx::ACC_BIAS, self.accel_bias),
            (idx::GYRO_BIAS, self.gyro_bias),
        ] {
            for i in 0..3 {
                diag[o + i] = s * s;
            }
        }
        DMatrix::from_diagonal(&diag)
    }
}

/// Offsets added to the ground-truth initial state, to emulate imperfect
/// initialization and calibration. Position is always exact.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialErrors {
    pub attitude: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub noise: NoiseParams,
    /// Update and augmentation rate, Hz.
    pub update_rate: f64,
    /// Displacement window, s.
    pub window: f64,
    pub max_clones: usize,
    /// Mahalanobis gate on the innovation; `None` accepts everything.
    pub gate: Option<f64>,
    pub initial_std: InitialStd,
    pub initial_errors: InitialErrors,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            update_rate: 20.0,
            window: 0.5,
            max_clones: 10,
            gate: Some(CHI2_3DOF_999),
            initial_std: InitialStd::default(),
            initial_errors: InitialErrors::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        self.noise.validate()?;
        if !(self.update_rate > 0.0) || !(self.window > 0.0) {
            return Err(Error::invalid("update rate and window must be positive"));
        }
        if self.max_clones == 0 {
            return Err(Error::invalid("at least one clone is required"));
        }
        let span = self.window * self.update_rate;
        if (span - self.max_clones as f64).abs() > 1e-9 {
            return Err(Error::invalid(alloc::format!(
                "window·rate = {span} must equal the clone count {}",
                self.max_clones
            )));
        }
        if let Some(g) = self.gate {
            if !(g > 0.0) {
                return Err(Error::invalid("gate threshold must be positive"));
            }
        }
        Ok(())
    }
}

/// Nominal state, clones and joint error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Time of `current`, s.
    pub time: f64,
    pub current: NavState,
    clones: VecDeque<CloneState>,
    covariance: DMatrix<f64>,
    max_clones: usize,
}

impl FilterState {
    /// `covariance` is the 15×15 current-state covariance.
    pub fn new(time: f64, current: NavState, covariance: DMatrix<f64>, max_clones: usize) -> Self {
        assert_eq!(covariance.shape(), (CORE_DIM, CORE_DIM));
        Self {
            time,
            current,
            clones: VecDeque::with_capacity(max_clones + 1),
            covariance,
            max_clones,
        }
    }

    pub fn clones(&self) -> &VecDeque<CloneState> {
        &self.clones
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn max_clones(&self) -> usize {
        self.max_clones
    }

    pub fn dim(&self) -> usize {
        CLONE_DIM * self.clones.len() + CORE_DIM
    }

    /// Offset of the current-state block.
    pub fn core_offset(&self) -> usize {
        CLONE_DIM * self.clones.len()
    }

    /// Offset of clone `j`'s block.
    pub fn clone_offset(&self, j: usize) -> usize {
        CLONE_DIM * j
    }

    /// Index of the clone taken at `t`, if any.
    pub fn find_clone(&self, t: f64) -> Option<usize> {
        self.clones
            .iter()
            .position(|c| (c.t - t).abs() <= CLONE_TIME_TOLERANCE)
    }

    /// Current position covariance.
    pub fn position_covariance(&self) -> Matrix3<f64> {
        let o = self.core_offset() + idx::POS;
        self.covariance.fixed_view::<3, 3>(o, o).into_owned()
    }

    /// Applies a full error-state correction to clones and current state.
    pub fn apply_correction(&mut self, delta: &DVector<f64>) {
        assert_eq!(delta.len(), self.dim());
        for (j, clone) in self.clones.iter_mut().enumerate() {
            let o = CLONE_DIM * j;
            let dtheta = Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
            clone.attitude = clone.attitude.boxplus(&dtheta);
            clone.position += Vector3::new(delta[o + 3], delta[o + 4], delta[o + 5]);
        }
        let o = self.core_offset();
        self.current = self.current.boxplus(&delta.as_slice()[o..o + CORE_DIM]);
    }

    /// Symmetry and positive-semidefiniteness of the covariance.
    pub fn covariance_health(&self) -> CovarianceHealth {
        CovarianceHealth::of(&self.covariance)
    }

    pub(crate) fn covariance_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.covariance
    }

    pub(crate) fn clones_mut(&mut self) -> &mut VecDeque<CloneState> {
        &mut self.clones
    }

    pub(crate) fn set_covariance(&mut self, p: DMatrix<f64>) {
        debug_assert_eq!(p.nrows(), self.dim());
        self.covariance = p;
    }
}

/// Covariance diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceHealth {
    /// `‖P − Pᵀ‖∞` (max-abs entry).
    pub asymmetry: f64,
    /// Smallest eigenvalue of the symmetric part.
    pub min_eigenvalue: f64,
}

impl CovarianceHealth {
    pub fn of(p: &DMatrix<f64>) -> Self {
        let asymmetry = (p - p.transpose()).amax();
        let sym = (p + p.transpose()) * 0.5;
        let min_eigenvalue = sym
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        Self {
            asymmetry,
            min_eigenvalue,
        }
    }

    /// Cheap check that `min eig(P) ≥ −tol` via a Cholesky factorization of
    /// `P + tol·I`, plus the symmetry bound.
    pub fn check(p: &DMatrix<f64>, tol: f64) -> bool {
        if (p - p.transpose()).amax() >= tol {
            return false;
        }
        let n = p.nrows();
        let shifted = p + DMatrix::<f64>::identity(n, n) * tol;
        shifted.cholesky().is_some()
    }
}

pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = m;
            p[(j, i)] = m;
        }
    }
}
