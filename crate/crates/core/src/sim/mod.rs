//! Deterministic quadrotor flight simulator.
//!
//! The vehicle obeys `ṗ = v`, `v̇ = R·(T + F) + g` where `T = [0, 0, c]` is
//! the commanded mass-normalized collective thrust and `F = −diag(d)·Rᵀv`
//! is body-frame linear drag, the force a thrust-only model cannot see.
//! A tracking controller emits thrust and body rates at the IMU rate; both
//! are held constant over each sample period while the translational state
//! is integrated with RK4 at four sub-steps per period (400 Hz at the default
//! 100 Hz rate).
//!
//! IMU samples are interval outputs, like the delta-velocity/delta-angle
//! output of a real strapdown IMU: the sample stamped `t_k` reports the mean
//! body rate and mean specific force over `[t_k, t_k+1)`, the latter
//! expressed in the body frame at `t_k`. Integrating the samples with the
//! filter's motion model therefore reproduces the true orientation and
//! velocity exactly in the absence of noise.

mod controller;
mod track;

pub use controller::{Command, Controller};
pub use track::{
    generate_track, PeriodicSpline, ReferencePoint, Track, TrackKind, RACETRACK_SPEED,
    RACETRACK_WAYPOINTS,
};

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::filter::DisplacementMeasurement;
use crate::so3::{self, Rotation};
use crate::GRAVITY;

/// Position error at which the controller is declared diverged, metres.
pub const DIVERGENCE_LIMIT: f64 = 10.0;

/// IMU and measurement noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Accelerometer white noise per sample, m/s².
    pub accel: f64,
    /// Gyroscope white noise per sample, rad/s.
    pub gyro: f64,
    /// Accelerometer bias random walk, m/s²/√s.
    pub accel_bias_walk: f64,
    /// Gyroscope bias random walk, rad/s/√s.
    pub gyro_bias_walk: f64,
    /// Displacement measurement noise, m.
    pub measurement: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            accel: 0.01,
            gyro: 0.001,
            accel_bias_walk: 0.001,
            gyro_bias_walk: 0.0001,
            measurement: 0.01,
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            accel: 0.0,
            gyro: 0.0,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
            measurement: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.accel,
            self.gyro,
            self.accel_bias_walk,
            self.gyro_bias_walk,
            self.measurement,
        ];
        if all.iter().all(|s| s.is_finite() && *s >= 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("noise standard deviations must be finite and ≥ 0"))
        }
    }
}

/// Independent random substreams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum RngStream {
    InitialBias = 1,
    ImuNoise = 2,
    BiasWalk = 3,
    Measurement = 4,
    InitialError = 5,
}

/// ChaCha20 generator for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: RngStream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub track: TrackKind,
    /// Flight duration, s.
    pub duration: f64,
    /// IMU and command rate, Hz.
    pub imu_rate: f64,
    /// Translational integration rate, Hz; rounded up to a multiple of the IMU rate.
    pub integration_rate: f64,
    pub seed: u64,
    /// Body-frame linear drag coefficients `d_x, d_y, d_z`, 1/s.
    pub drag: [f64; 3],
    /// Upper limit on mass-normalized thrust, m/s².
    pub max_thrust: f64,
    /// Limit on the commanded body-rate norm, rad/s.
    pub max_body_rate: f64,
    pub noise: NoiseParams,
    /// Standard deviation of the initial accelerometer bias draw, m/s².
    pub initial_accel_bias_std: f64,
    /// Standard deviation of the initial gyroscope bias draw, rad/s.
    pub initial_gyro_bias_std: f64,
}

impl SimConfig {
    pub fn new(track: TrackKind, duration: f64, seed: u64) -> Self {
        Self {
            track,
            duration,
            imu_rate: 100.0,
            integration_rate: 400.0,
            seed,
            drag: [0.3, 0.3, 0.05],
            max_thrust: 40.0,
            max_body_rate: 15.0,
            noise: NoiseParams::default(),
            initial_accel_bias_std: 0.02,
            initial_gyro_bias_std: 0.002,
        }
    }

    /// No noise, no biases, no drag.
    pub fn ideal(track: TrackKind, duration: f64, seed: u64) -> Self {
        Self {
            drag: [0.0; 3],
            noise: NoiseParams::zero(),
            initial_accel_bias_std: 0.0,
            initial_gyro_bias_std: 0.0,
            ..Self::new(track, duration, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::invalid("duration must be positive"));
        }
        if !(self.imu_rate > 0.0) || !self.imu_rate.is_finite() {
            return Err(Error::invalid("imu_rate must be positive"));
        }
        if !(self.integration_rate > 0.0) {
            return Err(Error::invalid("integration_rate must be positive"));
        }
        if !self.drag.iter().all(|d| d.is_finite() && *d >= 0.0) {
            return Err(Error::invalid("drag coefficients must be ≥ 0"));
        }
        if !(self.max_thrust > 0.0) || !(self.max_body_rate > 0.0) {
            return Err(Error::invalid("thrust and rate limits must be positive"));
        }
        if !(self.initial_accel_bias_std >= 0.0) || !(self.initial_gyro_bias_std >= 0.0) {
            return Err(Error::invalid("initial bias deviations must be ≥ 0"));
        }
        self.noise.validate()
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.imu_rate).round() as usize
    }
}

/// Gyroscope and accelerometer output, body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// rad/s
    pub gyro: Vector3<f64>,
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
}

/// Commanded mass-normalized collective thrust along body z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustCommand {
    pub t: f64,
    /// m/s²
    pub thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub attitude: Rotation,
    pub velocity: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

/// One simulated flight. `imu[k]`, `cmds[k]` and `gt[k]` share a timestamp;
/// `gt` has one extra sample at the end of the flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub imu_rate: f64,
    pub imu: Vec<ImuSample>,
    pub cmds: Vec<ThrustCommand>,
    pub gt: Vec<GroundTruthSample>,
}

impl Dataset {
    pub fn duration(&self) -> f64 {
        match (self.gt.first(), self.gt.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn top_speed(&self) -> f64 {
        self.gt
            .iter()
            .map(|s| s.velocity.norm())
            .fold(0.0, f64::max)
    }

    pub fn path_length(&self) -> f64 {
        self.gt
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Checks the stream invariants: matching lengths, shared and strictly
    /// increasing timestamps.
    pub fn validate(&self) -> Result<()> {
        if self.imu.is_empty() {
            return Err(Error::invalid("dataset has no IMU samples"));
        }
        if self.cmds.len() != self.imu.len() {
            return Err(Error::invalid(format!(
                "{} commands for {} IMU samples",
                self.cmds.len(),
                self.imu.len()
            )));
        }
        if self.gt.len() < self.imu.len() {
            return Err(Error::invalid("ground truth shorter than the IMU stream"));
        }
        for (k, (imu, cmd)) in self.imu.iter().zip(&self.cmds).enumerate() {
            if (imu.t - cmd.t).abs() > 1e-9 || (imu.t - self.gt[k].t).abs() > 1e-9 {
                return Err(Error::invalid(format!("timestamp mismatch at sample {k}")));
            }
            if k > 0 && !(imu.t > self.imu[k - 1].t) {
                return Err(Error::invalid(format!(
                    "IMU timestamps not strictly increasing at sample {k}"
                )));
            }
        }
        Ok(())
    }
}

struct Vehicle<'a> {
    attitude: &'a Rotation,
    body_rate: Vector3<f64>,
    thrust: Vector3<f64>,
    drag: Matrix3<f64>,
}

impl Vehicle<'_> {
    fn attitude_at(&self, s: f64) -> Matrix3<f64> {
        self.attitude.matrix() * so3::exp(&(self.body_rate * s)).unwrap().matrix()
    }

    fn acceleration(&self, s: f64, velocity: &Vector3<f64>) -> Vector3<f64> {
        let r = self.attitude_at(s);
        let force = self.thrust - self.drag * (r.transpose() * velocity);
        r * force + GRAVITY
    }

    /// RK4 over one command period.
    fn integrate(
        &self,
        mut p: Vector3<f64>,
        mut v: Vector3<f64>,
        period: f64,
        substeps: usize,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let h = period / substeps as f64;
        for i in 0..substeps {
            let s = i as f64 * h;
            let k1v = self.acceleration(s, &v);
            let k1p = v;
            let v2 = v + k1v * (0.5 * h);
            let k2v = self.acceleration(s + 0.5 * h, &v2);
            let k2p = v2;
            let v3 = v + k2v * (0.5 * h);
            let k3v = self.acceleration(s + 0.5 * h, &v3);
            let k3p = v3;
            let v4 = v + k3v * h;
            let k4v = self.acceleration(s + h, &v4);
            let k4p = v4;
            p += (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (h / 6.0);
            v += (k1v + 2.0 * k2v + 2.0 * k3v + k4v) * (h / 6.0);
        }
        (p, v)
    }
}

fn normal_vector(dist: &Normal<f64>, rng: &mut ChaCha20Rng) -> Vector3<f64> {
    Vector3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng))
}

fn normal(std: f64) -> Normal<f64> {
    // validated upstream: std is finite and non-negative
    Normal::new(0.0, std).unwrap()
}

/// Flies `config.track` and records ground truth, commands and IMU output.
pub fn simulate(config: &SimConfig) -> Result<Dataset> {
    config.validate()?;
    let track = generate_track(&config.track, config.duration)?;
    let controller = Controller::new(config.drag, config.max_thrust, config.max_body_rate);
    let n = config.sample_count();
    if n == 0 {
        return Err(Error::invalid("duration shorter than one IMU period"));
    }
    let dt = 1.0 / config.imu_rate;
    let substeps = ((config.integration_rate / config.imu_rate).ceil() as usize).max(1);
    let drag = Matrix3::from_diagonal(&Vector3::from(config.drag));

    let mut bias_rng = rng_stream(config.seed, RngStream::InitialBias);
    let mut noise_rng = rng_stream(config.seed, RngStream::ImuNoise);
    let mut walk_rng = rng_stream(config.seed, RngStream::BiasWalk);
    let mut accel_bias = normal_vector(&normal(config.initial_accel_bias_std), &mut bias_rng);
    let mut gyro_bias = normal_vector(&normal(config.initial_gyro_bias_std), &mut bias_rng);
    let accel_noise = normal(config.noise.accel);
    let gyro_noise = normal(config.noise.gyro);
    let accel_walk = normal(config.noise.accel_bias_walk * dt.sqrt());
    let gyro_walk = normal(config.noise.gyro_bias_walk * dt.sqrt());

    let start = track.sample(0.0);
    let mut position = start.position;
    let mut velocity = start.velocity;
    let mut attitude = controller.initial_attitude(&start);

    let mut imu = Vec::with_capacity(n);
    let mut cmds = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n + 1);

    for k in 0..=n {
        let t = k as f64 / config.imu_rate;
        gt.push(GroundTruthSample {
            t,
            position,
            attitude,
            velocity,
            accel_bias,
            gyro_bias,
        });
        let reference = track.sample(t);
        let error = (position - reference.position).norm();
        if !(error <= DIVERGENCE_LIMIT) {
            return Err(Error::SimulationFailure {
                t,
                reason: format!("position error {error:.2} m exceeds {DIVERGENCE_LIMIT} m"),
            });
        }
        if k == n {
            break;
        }

        let command = controller.command(&reference, &position, &velocity, &attitude);
        cmds.push(ThrustCommand {
            t,
            thrust: command.thrust,
        });
        let vehicle = Vehicle {
            attitude: &attitude,
            body_rate: command.body_rate,
            thrust: Vector3::new(0.0, 0.0, command.thrust),
            drag,
        };
        let (next_p, next_v) = vehicle.integrate(position, velocity, dt, substeps);
        let specific_force = attitude.matrix().transpose() * ((next_v - velocity) / dt - GRAVITY);
        imu.push(ImuSample {
            t,
            gyro: command.body_rate + gyro_bias + normal_vector(&gyro_noise, &mut noise_rng),
            accel: specific_force + accel_bias + normal_vector(&accel_noise, &mut noise_rng),
        });

        attitude = attitude * so3::exp(&(command.body_rate * dt))?;
        position = next_p;
        velocity = next_v;
        accel_bias += normal_vector(&accel_walk, &mut walk_rng);
        gyro_bias += normal_vector(&gyro_walk, &mut walk_rng);
    }

    Ok(Dataset {
        imu_rate: config.imu_rate,
        imu,
        cmds,
        gt,
    })
}

/// Index `k` with `gt[k].t ≤ t < gt[k+1].t`, plus the interpolation weight.
fn bracket(gt: &[GroundTruthSample], t: f64) -> Result<(usize, f64)> {
    const SLACK: f64 = 1e-9;
    let (first, last) = match (gt.first(), gt.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::invalid("empty ground truth")),
    };
    if !t.is_finite() || t < first - SLACK || t > last + SLACK {
        return Err(Error::invalid(format!(
            "time {t} outside ground truth range [{first}, {last}]"
        )));
    }
    if gt.len() == 1 {
        return Ok((0, 0.0));
    }
    let upper = gt.partition_point(|s| s.t <= t).clamp(1, gt.len() - 1);
    let k = upper - 1;
    let span = gt[upper].t - gt[k].t;
    let w = ((t - gt[k].t) / span).clamp(0.0, 1.0);
    Ok((k, w))
}

/// Ground-truth position at `t`, linearly interpolated.
pub fn interpolate_position(gt: &[GroundTruthSample], t: f64) -> Result<Vector3<f64>> {
    let (k, w) = bracket(gt, t)?;
    if w == 0.0 {
        return Ok(gt[k].position);
    }
    Ok(gt[k].position * (1.0 - w) + gt[k + 1].position * w)
}

/// Ground-truth sample at `t`: linear in position, velocity and biases,
/// geodesic in attitude.
pub fn interpolate_state(gt: &[GroundTruthSample], t: f64) -> Result<GroundTruthSample> {
    let (k, w) = bracket(gt, t)?;
    if w == 0.0 {
        return Ok(GroundTruthSample { t, ..gt[k] });
    }
    let (a, b) = (&gt[k], &gt[k + 1]);
    Ok(GroundTruthSample {
        t,
        position: a.position.lerp(&b.position, w),
        attitude: a.attitude.slerp(&b.attitude, w),
        velocity: a.velocity.lerp(&b.velocity, w),
        accel_bias: a.accel_bias.lerp(&b.accel_bias, w),
        gyro_bias: a.gyro_bias.lerp(&b.gyro_bias, w),
    })
}

/// `p(t_j) − p(t_i)` from ground truth plus isotropic Gaussian noise.
pub fn displacement_oracle<R: rand_core::RngCore>(
    gt: &[GroundTruthSample],
    t_i: f64,
    t_j: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<DisplacementMeasurement> {
    if !(t_i < t_j) {
        return Err(Error::invalid("displacement interval must satisfy t_i < t_j"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("measurement sigma must be ≥ 0"));
    }
    let delta = interpolate_position(gt, t_j)? - interpolate_position(gt, t_i)?;
    let noise = Vector3::new(
        normal(sigma).sample(rng),
        normal(sigma).sample(rng),
        normal(sigma).sample(rng),
    );
    Ok(DisplacementMeasurement {
        delta: delta + noise,
        t_i,
        t_j,
        covariance: Matrix3::identity() * (sigma * sigma),
    })
}
