//! Finite-difference oracles shared by integration tests.
//!
//! The nonlinear maps here are written against `nalgebra::Rotation3` rather
//! than the crate's own rotation type, so they check the crate instead of
//! echoing it.

#![allow(dead_code)]

use imo_core::filter::{FilterState, NavState, CORE_DIM, NOISE_DIM};
use imo_core::sim::ImuSample;
use imo_core::so3;
use nalgebra::{DMatrix, Rotation3, UnitQuaternion, Vector3};
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

#[derive(Clone, Copy)]
pub struct Truth {
    pub r: Rotation3<f64>,
    pub v: Vector3<f64>,
    pub p: Vector3<f64>,
    pub ba: Vector3<f64>,
    pub bg: Vector3<f64>,
}

pub fn randn<R: RngCore>(rng: &mut R, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) * scale)
}

pub fn random_nav<R: RngCore>(rng: &mut R) -> NavState {
    NavState {
        attitude: so3::exp(&randn(rng, 1.0)).unwrap(),
        velocity: randn(rng, 5.0),
        position: randn(rng, 20.0),
        accel_bias: randn(rng, 0.05),
        gyro_bias: randn(rng, 0.01),
    }
}

pub fn random_imu<R: RngCore>(rng: &mut R) -> ImuSample {
    ImuSample {
        t: 0.0,
        gyro: randn(rng, 2.0),
        accel: randn(rng, 5.0) + Vector3::new(0.0, 0.0, 9.81),
    }
}

pub fn truth_of(nav: &NavState) -> Truth {
    Truth {
        r: Rotation3::from_matrix_unchecked(*nav.attitude.matrix()),
        v: nav.velocity,
        p: nav.position,
        ba: nav.accel_bias,
        bg: nav.gyro_bias,
    }
}

fn slice3(d: &[f64], o: usize) -> Vector3<f64> {
    Vector3::new(d[o], d[o + 1], d[o + 2])
}

/// `Exp(δθ)·R`, additive elsewhere. Error layout `[δθ, δv, δp, δb_a, δb_g]`.
pub fn perturb(x: &Truth, d: &[f64]) -> Truth {
    Truth {
        r: Rotation3::new(slice3(d, 0)) * x.r,
        v: x.v + slice3(d, 3),
        p: x.p + slice3(d, 6),
        ba: x.ba + slice3(d, 9),
        bg: x.bg + slice3(d, 12),
    }
}

/// Quaternion-based logarithm, stable at small angles.
pub fn rotation_log(r: &Rotation3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(r);
    let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let s = v.norm();
    if s < 1e-300 {
        return 2.0 * v;
    }
    v * (2.0 * s.atan2(w) / s)
}

pub fn difference(a: &Truth, b: &Truth) -> [f64; CORE_DIM] {
    let mut out = [0.0; CORE_DIM];
    let parts = [
        rotation_log(&(a.r * b.r.inverse())),
        a.v - b.v,
        a.p - b.p,
        a.ba - b.ba,
        a.bg - b.bg,
    ];
    for (k, v) in parts.iter().enumerate() {
        out[3 * k..3 * k + 3].copy_from_slice(v.as_slice());
    }
    out
}

/// Kinematics with explicit noise `[n_a, n_g, n_ba, n_bg]` entering as in
/// `ã = a + b_a + n_a`, `ω̃ = ω + b_g + n_g`, `b⁺ = b + n_b`.
pub fn step(x: &Truth, gyro: &Vector3<f64>, accel: &Vector3<f64>, n: &[f64], dt: f64) -> Truth {
    let a = accel - x.ba - slice3(n, 0);
    let w = gyro - x.bg - slice3(n, 3);
    let world = x.r * a + GRAVITY;
    Truth {
        r: x.r * Rotation3::new(w * dt),
        v: x.v + world * dt,
        p: x.p + x.v * dt + world * (0.5 * dt * dt),
        ba: x.ba + slice3(n, 6),
        bg: x.bg + slice3(n, 9),
    }
}

/// Central differences of the error-state propagation map.
pub fn fd_propagation(nav: &NavState, imu: &ImuSample, dt: f64, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = truth_of(nav);
    let zero_n = [0.0; NOISE_DIM];
    let nominal = step(&x, &imu.gyro, &imu.accel, &zero_n, dt);
    let mut a = DMatrix::zeros(CORE_DIM, CORE_DIM);
    for i in 0..CORE_DIM {
        let mut d = [0.0; CORE_DIM];
        d[i] = h;
        let plus = difference(&step(&perturb(&x, &d), &imu.gyro, &imu.accel, &zero_n, dt), &nominal);
        d[i] = -h;
        let minus = difference(&step(&perturb(&x, &d), &imu.gyro, &imu.accel, &zero_n, dt), &nominal);
        for r in 0..CORE_DIM {
            a[(r, i)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    let mut b = DMatrix::zeros(CORE_DIM, NOISE_DIM);
    for i in 0..NOISE_DIM {
        let mut n = [0.0; NOISE_DIM];
        n[i] = h;
        let plus = difference(&step(&x, &imu.gyro, &imu.accel, &n, dt), &nominal);
        n[i] = -h;
        let minus = difference(&step(&x, &imu.gyro, &imu.accel, &n, dt), &nominal);
        for r in 0..CORE_DIM {
            b[(r, i)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    (a, b)
}

/// Central differences of `h(X) = p_j − p_i` over the full error state,
/// with clone `clone` as the interval start.
pub fn fd_measurement(state: &FilterState, clone: usize, h: f64) -> DMatrix<f64> {
    let n = state.dim();
    let core = state.core_offset();
    let measure = |d: &[f64]| -> Vector3<f64> {
        let c = &state.clones()[clone];
        let o = 6 * clone;
        let p_i = c.position + slice3(d, o + 3);
        let cur = perturb(&truth_of(&state.current), &d[core..core + CORE_DIM]);
        cur.p - p_i
    };
    let mut jac = DMatrix::zeros(3, n);
    for i in 0..n {
        let mut d = vec![0.0; n];
        d[i] = h;
        let plus = measure(&d);
        d[i] = -h;
        let minus = measure(&d);
        jac.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
