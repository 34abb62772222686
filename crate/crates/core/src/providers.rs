//! Sources of displacement measurements.
//!
//! Every provider answers a [`DisplacementQuery`] for the interval
//! `[t_i, t_j]` with either a measurement or a typed [`Rejection`], which the
//! filter treats as a skipped update.
//!
//! * [`OracleProvider`]: ground truth plus Gaussian noise.
//! * [`ModelProvider`]: integrates the commanded thrust through the
//!   rigid-body model with the external force set to zero.
//! * [`TcnProvider`]: network inference on the thrust/gyro window.
//! * [`DeadReckoning`]: never answers.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::filter::{DisplacementMeasurement, Rejection, CLONE_TIME_TOLERANCE};
use crate::sim::{displacement_oracle, rng_stream, Dataset, GroundTruthSample, RngStream};
use crate::so3::{self, Rotation};
use crate::tcn::TcnModel;
use crate::GRAVITY;

/// Network input channels: world thrust (3) and world gyro (3).
pub const WINDOW_CHANNELS: usize = 6;

/// One IMU-rate sample of vehicle inputs before rotation to the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodySample {
    /// Orientation at the start of the sample period.
    pub attitude: Rotation,
    /// Bias-corrected body rate, rad/s.
    pub body_rate: Vector3<f64>,
    /// Commanded collective thrust, m/s².
    pub thrust: f64,
}

/// Thrust and gyro over one displacement window, rotated to the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementWindow {
    pub t_i: f64,
    /// Sample period, s.
    pub dt: f64,
    /// `R·[0, 0, c]` per sample, m/s².
    pub thrust: Vec<Vector3<f64>>,
    /// `R·(ω̃ − b_g)` per sample, rad/s.
    pub gyro: Vec<Vector3<f64>>,
    /// Velocity at `t_i`.
    pub velocity: Vector3<f64>,
    /// Orientation at `t_i`.
    pub attitude: Rotation,
}

impl MeasurementWindow {
    /// Rotates body samples to the world frame. The thrust direction is taken
    /// at the middle of each sample period, where the zero-order-hold body
    /// rate puts the mean orientation.
    pub fn from_body(
        t_i: f64,
        dt: f64,
        velocity: Vector3<f64>,
        attitude: Rotation,
        samples: impl IntoIterator<Item = BodySample>,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("window sample period must be positive"));
        }
        let mut thrust = Vec::new();
        let mut gyro = Vec::new();
        for s in samples {
            let mid = s.attitude * so3::exp(&(s.body_rate * (0.5 * dt)))?;
            thrust.push(mid * Vector3::new(0.0, 0.0, s.thrust));
            gyro.push(s.attitude * s.body_rate);
        }
        let window = Self {
            t_i,
            dt,
            thrust,
            gyro,
            velocity,
            attitude,
        };
        window.validate()?;
        Ok(window)
    }

    pub fn len(&self) -> usize {
        self.thrust.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thrust.is_empty()
    }

    pub fn t_j(&self) -> f64 {
        self.t_i + self.dt * self.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() || self.thrust.len() != self.gyro.len() {
            return Err(Error::invalid("window needs matching, nonempty thrust and gyro"));
        }
        let finite = self
            .thrust
            .iter()
            .chain(&self.gyro)
            .chain(core::iter::once(&self.velocity))
            .all(|v| v.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::invalid("window contains non-finite values"));
        }
        Ok(())
    }

    /// Channels × samples matrix `[T_x, T_y, T_z, ω_x, ω_y, ω_z]`.
    pub fn to_input(&self) -> DMatrix<f64> {
        DMatrix::from_fn(WINDOW_CHANNELS, self.len(), |c, k| {
            if c < 3 {
                self.thrust[k][c]
            } else {
                self.gyro[k][c - 3]
            }
        })
    }
}

/// Window over `[t_i, t_i + window)` built from ground-truth orientation,
/// velocity and gyro bias, with the recorded gyro and thrust commands.
pub fn window_from_ground_truth(dataset: &Dataset, t_i: f64, window: f64) -> Result<MeasurementWindow> {
    let dt = 1.0 / dataset.imu_rate;
    let first = (t_i * dataset.imu_rate).round();
    let n = (window * dataset.imu_rate).round() as usize;
    if first < 0.0 {
        return Err(Error::invalid(format!("window start {t_i} before the dataset")));
    }
    let first = first as usize;
    if first + n > dataset.imu.len() {
        return Err(Error::invalid(format!("window at {t_i} runs past the dataset")));
    }
    if (dataset.imu[first].t - t_i).abs() > CLONE_TIME_TOLERANCE {
        return Err(Error::invalid(format!("window start {t_i} is off the sample grid")));
    }
    let samples = (first..first + n).map(|k| BodySample {
        attitude: dataset.gt[k].attitude,
        body_rate: dataset.imu[k].gyro - dataset.gt[k].gyro_bias,
        thrust: dataset.cmds[k].thrust,
    });
    let start = &dataset.gt[first];
    MeasurementWindow::from_body(t_i, dt, start.velocity, start.attitude, samples)
}

/// Position change over one interval of length `dt` under constant world
/// thrust `thrust_world` and gravity, starting at `velocity`.
pub fn displacement_step(velocity: &Vector3<f64>, thrust_world: &Vector3<f64>, dt: f64) -> Vector3<f64> {
    velocity * dt + (thrust_world + GRAVITY) * (0.5 * dt * dt)
}

/// Inverse of [`displacement_step`] for body thrust: the `T` for which
/// `Δp = v·Δt + ½Δt²(R·T + g)`.
pub fn thrust_from_displacement(
    delta: &Vector3<f64>,
    velocity: &Vector3<f64>,
    attitude: &Rotation,
    dt: f64,
) -> Result<Vector3<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("interval {dt} s must be positive")));
    }
    let world = delta * (2.0 / (dt * dt)) - velocity * (2.0 / dt) - GRAVITY;
    Ok(attitude.inverse() * world)
}

/// Thrust-only displacement over the window, chained sample by sample with
/// zero-order-hold thrust and no external force.
pub fn model_displacement(window: &MeasurementWindow, sigma: f64) -> DisplacementMeasurement {
    let mut v = window.velocity;
    let mut delta = Vector3::zeros();
    for t in &window.thrust {
        delta += displacement_step(&v, t, window.dt);
        v += (t + GRAVITY) * window.dt;
    }
    DisplacementMeasurement {
        delta,
        t_i: window.t_i,
        t_j: window.t_j(),
        covariance: Matrix3::identity() * (sigma * sigma),
    }
}

/// What the filter asks a provider for.
#[derive(Debug, Clone, Copy)]
pub struct DisplacementQuery<'a> {
    pub t_i: f64,
    pub t_j: f64,
    /// Filter-estimated window, present when the provider asked for one.
    pub window: Option<&'a MeasurementWindow>,
}

pub trait DisplacementProvider {
    /// Whether queries should carry a filter-estimated window.
    fn needs_window(&self) -> bool {
        false
    }

    fn displacement(&mut self, query: &DisplacementQuery<'_>) -> core::result::Result<DisplacementMeasurement, Rejection>;
}

impl<P: DisplacementProvider + ?Sized> DisplacementProvider for &mut P {
    fn needs_window(&self) -> bool {
        (**self).needs_window()
    }

    fn displacement(&mut self, query: &DisplacementQuery<'_>) -> core::result::Result<DisplacementMeasurement, Rejection> {
        (**self).displacement(query)
    }
}

/// Ground-truth displacements with noise `N(0, σ²I)`.
#[derive(Debug, Clone)]
pub struct OracleProvider<'a> {
    gt: &'a [GroundTruthSample],
    sigma: f64,
    rng: ChaCha20Rng,
}

impl<'a> OracleProvider<'a> {
    /// Noise comes from the measurement stream of `seed`.
    pub fn new(gt: &'a [GroundTruthSample], sigma: f64, seed: u64) -> Self {
        Self {
            gt,
            sigma,
            rng: rng_stream(seed, RngStream::Measurement),
        }
    }
}

impl DisplacementProvider for OracleProvider<'_> {
    fn displacement(&mut self, query: &DisplacementQuery<'_>) -> core::result::Result<DisplacementMeasurement, Rejection> {
        displacement_oracle(self.gt, query.t_i, query.t_j, self.sigma, &mut self.rng)
            .map_err(|e| Rejection::Provider(e.to_string()))
    }
}

/// Thrust-model displacements.
#[derive(Debug, Clone)]
pub struct ModelProvider<'a> {
    /// `Some` takes orientation and velocity from ground truth; `None` uses
    /// the filter's window.
    ground_truth: Option<&'a Dataset>,
    window: f64,
    sigma: f64,
}

impl<'a> ModelProvider<'a> {
    /// Orientation, velocity and gyro bias from ground truth.
    pub fn ground_truth(dataset: &'a Dataset, window: f64, sigma: f64) -> Self {
        Self {
            ground_truth: Some(dataset),
            window,
            sigma,
        }
    }

    /// Orientation, velocity and gyro bias from the running filter.
    pub fn closed_loop(sigma: f64) -> Self {
        Self {
            ground_truth: None,
            window: 0.0,
            sigma,
        }
    }
}

impl DisplacementProvider for ModelProvider<'_> {
    fn needs_window(&self) -> bool {
        self.ground_truth.is_none()
    }

    fn displacement(&mut self, query: &DisplacementQuery<'_>) -> core::result::Result<DisplacementMeasurement, Rejection> {
        let window = match self.ground_truth {
            Some(ds) => window_from_ground_truth(ds, query.t_i, self.window)
                .map_err(|e| Rejection::Provider(e.to_string()))?,
            None => query
                .window
                .ok_or_else(|| Rejection::Provider("no measurement window".into()))?
                .clone(),
        };
        Ok(model_displacement(&window, self.sigma))
    }
}

/// Network displacements with constant covariance `σ²I`.
#[derive(Debug, Clone)]
pub struct TcnProvider<'a> {
    model: &'a TcnModel,
    sigma: f64,
}

impl<'a> TcnProvider<'a> {
    pub fn new(model: &'a TcnModel, sigma: f64) -> Self {
        Self { model, sigma }
    }
}

/// Network prediction for one window.
pub fn tcn_displacement(window: &MeasurementWindow, model: &TcnModel, sigma: f64) -> Result<DisplacementMeasurement> {
    let delta = model.forward(&window.to_input())?;
    Ok(DisplacementMeasurement {
        delta,
        t_i: window.t_i,
        t_j: window.t_j(),
        covariance: Matrix3::identity() * (sigma * sigma),
    })
}

impl DisplacementProvider for TcnProvider<'_> {
    fn needs_window(&self) -> bool {
        true
    }

    fn displacement(&mut self, query: &DisplacementQuery<'_>) -> core::result::Result<DisplacementMeasurement, Rejection> {
        let window = query
            .window
            .ok_or_else(|| Rejection::Provider("no measurement window".into()))?;
        tcn_displacement(window, self.model, self.sigma).map_err(|e| Rejection::Provider(e.to_string()))
    }
}

/// Never provides a measurement; the filter integrates the IMU alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeadReckoning;

impl DisplacementProvider for DeadReckoning {
    fn displacement(&mut self, _: &DisplacementQuery<'_>) -> core::result::Result<DisplacementMeasurement, Rejection> {
        Err(Rejection::Provider("dead reckoning".into()))
    }
}

/// A timestamped position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    pub t: f64,
    pub position: Vector3<f64>,
}

/// Chains displacements end to end from `start`, using only measurements
/// whose `t_i` meets the previous chain point, so overlapping windows are not
/// double counted. The chain is then linearly interpolated at `rate` Hz.
pub fn concatenate_displacements(
    start: PositionSample,
    displacements: &[DisplacementMeasurement],
    rate: f64,
) -> Vec<PositionSample> {
    let mut chain = Vec::new();
    chain.push(start);
    for m in displacements {
        let last = chain[chain.len() - 1];
        if (m.t_i - last.t).abs() <= CLONE_TIME_TOLERANCE {
            chain.push(PositionSample {
                t: m.t_j,
                position: last.position + m.delta,
            });
        }
    }
    if !(rate > 0.0) || chain.len() < 2 {
        return chain;
    }
    let end = chain[chain.len() - 1].t;
    let steps = ((end - start.t) * rate + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for k in 0..=steps {
        let t = start.t + k as f64 / rate;
        while seg + 2 < chain.len() && chain[seg + 1].t <= t {
            seg += 1;
        }
        let (a, b) = (&chain[seg], &chain[seg + 1]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(PositionSample {
            t,
            position: a.position.lerp(&b.position, w),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimConfig, TrackKind};
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn window(thrust: Vector3<f64>, velocity: Vector3<f64>, n: usize) -> MeasurementWindow {
        MeasurementWindow {
            t_i: 0.0,
            dt: 0.01,
            thrust: alloc::vec![thrust; n],
            gyro: alloc::vec![Vector3::zeros(); n],
            velocity,
            attitude: Rotation::identity(),
        }
    }

    #[test]
    fn hover_has_no_displacement() {
        let m = model_displacement(&window(Vector3::new(0.0, 0.0, 9.81), Vector3::zeros(), 50), 0.01);
        assert!(m.delta.amax() < 1e-9);
        assert!((m.t_j - 0.5).abs() < 1e-12);
    }

    #[test]
    fn free_fall() {
        let m = model_displacement(&window(Vector3::zeros(), Vector3::zeros(), 50), 0.01);
        assert!((m.delta - Vector3::new(0.0, 0.0, -0.5 * 9.81 * 0.25)).amax() < 1e-12);
        assert!((m.delta.z - -1.226).abs() < 1e-3);
    }

    #[test]
    fn thrust_inversion_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut randn = |s: f64| -> Vector3<f64> {
            Vector3::from_fn(|_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) * s)
        };
        for _ in 0..1000 {
            let r = so3::exp(&randn(1.0)).unwrap();
            let t = randn(10.0);
            let v = randn(5.0);
            let dp = displacement_step(&v, &(r * t), 0.01);
            let back = thrust_from_displacement(&dp, &v, &r, 0.01).unwrap();
            assert!((back - t).amax() < 1e-9, "{back} vs {t}");
        }
        let dp = GRAVITY * (0.5 * 0.01 * 0.01);
        let t = thrust_from_displacement(&dp, &Vector3::zeros(), &Rotation::identity(), 0.01).unwrap();
        assert!(t.amax() < 1e-9);
        assert!(thrust_from_displacement(&dp, &Vector3::zeros(), &Rotation::identity(), 0.0).is_err());
    }

    #[test]
    fn model_matches_ground_truth_without_drag() {
        let ds = simulate(&SimConfig::ideal(TrackKind::default_lemniscate(), 10.0, 2)).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..190 {
            let t_i = k as f64 * 0.05;
            let w = window_from_ground_truth(&ds, t_i, 0.5).unwrap();
            assert_eq!(w.len(), 50);
            let m = model_displacement(&w, 0.0);
            let truth = ds.gt[5 * k + 50].position - ds.gt[5 * k].position;
            worst = worst.max((m.delta - truth).amax());
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn ground_truth_window_bounds() {
        let ds = simulate(&SimConfig::ideal(TrackKind::default_lemniscate(), 1.0, 2)).unwrap();
        assert!(window_from_ground_truth(&ds, 0.6, 0.5).is_err());
        assert!(window_from_ground_truth(&ds, -0.1, 0.5).is_err());
        assert!(window_from_ground_truth(&ds, 0.5, 0.5).is_ok());
    }

    fn oracle_run(sigma: f64, seed: u64) -> (Vec<PositionSample>, Dataset) {
        let ds = simulate(&SimConfig::new(TrackKind::default_lemniscate(), 10.0, seed)).unwrap();
        let mut provider = OracleProvider::new(&ds.gt, sigma, seed);
        let ms: Vec<_> = (10..=200)
            .map(|k| {
                let t_j = k as f64 * 0.05;
                provider
                    .displacement(&DisplacementQuery { t_i: t_j - 0.5, t_j, window: None })
                    .unwrap()
            })
            .collect();
        let start = PositionSample { t: 0.0, position: ds.gt[0].position };
        (concatenate_displacements(start, &ms, 20.0), ds)
    }

    #[test]
    fn exact_oracle_chain_hits_ground_truth() {
        let (chain, ds) = oracle_run(0.0, 1);
        assert_eq!(chain.len(), 201);
        for p in chain.iter().step_by(10) {
            let k = (p.t * 100.0).round() as usize;
            assert!((p.position - ds.gt[k].position).amax() < 1e-9);
        }
    }

    #[test]
    fn zero_displacements_stay_put() {
        let start = PositionSample { t: 0.0, position: Vector3::new(1.0, 2.0, 3.0) };
        let ms: Vec<_> = (0..10)
            .map(|k| DisplacementMeasurement {
                delta: Vector3::zeros(),
                t_i: k as f64 * 0.5,
                t_j: (k + 1) as f64 * 0.5,
                covariance: Matrix3::identity(),
            })
            .collect();
        let chain = concatenate_displacements(start, &ms, 20.0);
        assert_eq!(chain.len(), 101);
        assert!(chain.iter().all(|p| (p.position - start.position).amax() < 1e-12));
    }

    #[test]
    fn window_input_layout() {
        let mut w = window(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros(), 50);
        w.gyro[49] = Vector3::new(4.0, 5.0, 6.0);
        let x = w.to_input();
        assert_eq!(x.shape(), (6, 50));
        assert_eq!(x[(2, 0)], 3.0);
        assert_eq!(x[(5, 49)], 6.0);
    }
}
