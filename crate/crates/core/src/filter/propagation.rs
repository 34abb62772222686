use alloc::format;

use nalgebra::{DMatrix, Matrix3, SMatrix};
#[allow(unused_imports)]
use num_traits::Float;

use super::{idx, symmetrize, FilterState, NavState, CORE_DIM, MAX_PROPAGATION_DT};
use crate::error::{Error, Result};
use crate::sim::{ImuSample, NoiseParams};
use crate::so3::{self, skew};
use crate::GRAVITY;

/// Noise vector ordering: `[n_a, n_g, n_ba, n_bg]`.
pub const NOISE_DIM: usize = 12;

/// IMU kinematics over one sample period. Biases are held.
pub fn nominal_step(state: &NavState, imu: &ImuSample, dt: f64) -> NavState {
    let accel = imu.accel - state.accel_bias;
    let rate = imu.gyro - state.gyro_bias;
    let world_accel = GRAVITY + state.attitude.matrix() * accel;
    NavState {
        attitude: state.attitude * so3::exp(&(rate * dt)).expect("finite gyro"),
        velocity: state.velocity + world_accel * dt,
        position: state.position + state.velocity * dt + world_accel * (0.5 * dt * dt),
        accel_bias: state.accel_bias,
        gyro_bias: state.gyro_bias,
    }
}

/// First-order error dynamics of [`nominal_step`]: `δs⁺ = A·δs + B·n`.
pub fn propagation_jacobians(
    state: &NavState,
    imu: &ImuSample,
    dt: f64,
) -> (SMatrix<f64, CORE_DIM, CORE_DIM>, SMatrix<f64, CORE_DIM, NOISE_DIM>) {
    let r = *state.attitude.matrix();
    let phi = (imu.gyro - state.gyro_bias) * dt;
    let r_next = r * so3::exp(&phi).expect("finite gyro").matrix();
    let rot_bias = -(r_next * so3::right_jacobian(&phi)) * dt;
    let accel_cross = skew(&(r * (imu.accel - state.accel_bias)));
    let half_dt2 = 0.5 * dt * dt;
    let eye = Matrix3::identity();

    let mut a = SMatrix::<f64, CORE_DIM, CORE_DIM>::identity();
    a.fixed_view_mut::<3, 3>(idx::THETA, idx::GYRO_BIAS).copy_from(&rot_bias);
    a.fixed_view_mut::<3, 3>(idx::VEL, idx::THETA).copy_from(&(-accel_cross * dt));
    a.fixed_view_mut::<3, 3>(idx::VEL, idx::ACC_BIAS).copy_from(&(-r * dt));
    a.fixed_view_mut::<3, 3>(idx::POS, idx::THETA).copy_from(&(-accel_cross * half_dt2));
    a.fixed_view_mut::<3, 3>(idx::POS, idx::VEL).copy_from(&(eye * dt));
    a.fixed_view_mut::<3, 3>(idx::POS, idx::ACC_BIAS).copy_from(&(-r * half_dt2));

    let mut b = SMatrix::<f64, CORE_DIM, NOISE_DIM>::zeros();
    b.fixed_view_mut::<3, 3>(idx::THETA, 3).copy_from(&rot_bias);
    b.fixed_view_mut::<3, 3>(idx::VEL, 0).copy_from(&(-r * dt));
    b.fixed_view_mut::<3, 3>(idx::POS, 0).copy_from(&(-r * half_dt2));
    b.fixed_view_mut::<3, 3>(idx::ACC_BIAS, 6).copy_from(&eye);
    b.fixed_view_mut::<3, 3>(idx::GYRO_BIAS, 9).copy_from(&eye);
    (a, b)
}

/// Covariance of `[n_a, n_g, n_ba, n_bg]` for one step of length `dt`.
/// White noise is per sample; bias walks scale with `dt`.
pub fn process_noise(noise: &NoiseParams, dt: f64) -> SMatrix<f64, NOISE_DIM, NOISE_DIM> {
    let mut w = SMatrix::<f64, NOISE_DIM, NOISE_DIM>::zeros();
    let vars = [
        noise.accel * noise.accel,
        noise.gyro * noise.gyro,
        noise.accel_bias_walk * noise.accel_bias_walk * dt,
        noise.gyro_bias_walk * noise.gyro_bias_walk * dt,
    ];
    for (block, var) in vars.iter().enumerate() {
        for i in 0..3 {
            w[(3 * block + i, 3 * block + i)] = *var;
        }
    }
    w
}

impl FilterState {
    /// Propagates the mean with [`nominal_step`] and the covariance with
    /// `P⁺ = A_X·P·A_Xᵀ + B_X·W·B_Xᵀ`, where `A_X = diag(I, A)` and
    /// `B_X = [0; B]`.
    pub fn propagate(&mut self, imu: &ImuSample, dt: f64, noise: &NoiseParams) -> Result<()> {
        if !(dt > 0.0) || dt > MAX_PROPAGATION_DT {
            return Err(Error::invalid(format!(
                "propagation step {dt} s outside (0, {MAX_PROPAGATION_DT}]"
            )));
        }
        if !imu.gyro.iter().chain(imu.accel.iter()).all(|c| c.is_finite()) {
            return Err(Error::Propagation(format!(
                "non-finite IMU sample at t = {}",
                imu.t
            )));
        }
        let (a, b) = propagation_jacobians(&self.current, imu, dt);
        let q = b * process_noise(noise, dt) * b.transpose();
        let next = nominal_step(&self.current, imu, dt);
        if !next.is_finite() {
            return Err(Error::Propagation(format!("state became non-finite at t = {}", imu.t)));
        }

        let c = self.core_offset();
        let n = self.dim();
        let p = self.covariance_mut();
        // Current block: A·Pcc·Aᵀ + Q.
        let pcc = p.fixed_view::<CORE_DIM, CORE_DIM>(c, c).into_owned();
        let new_cc = a * pcc * a.transpose() + q;
        p.fixed_view_mut::<CORE_DIM, CORE_DIM>(c, c).copy_from(&new_cc);
        // Clone–current cross terms: Pxc·Aᵀ; clone–clone blocks are untouched.
        if c > 0 {
            let pxc = p.view((0, c), (c, CORE_DIM)).into_owned();
            let new_xc = pxc * a.transpose();
            p.view_mut((0, c), (c, CORE_DIM)).copy_from(&new_xc);
            p.view_mut((c, 0), (CORE_DIM, c)).copy_from(&new_xc.transpose());
        }
        debug_assert_eq!(p.nrows(), n);
        symmetrize(p);

        self.current = next;
        self.time += dt;
        Ok(())
    }
}

/// Dense reference for the covariance step, used to check the block form.
#[doc(hidden)]
pub fn propagate_covariance_dense(
    p: &DMatrix<f64>,
    clones: usize,
    a: &SMatrix<f64, CORE_DIM, CORE_DIM>,
    b: &SMatrix<f64, CORE_DIM, NOISE_DIM>,
    w: &SMatrix<f64, NOISE_DIM, NOISE_DIM>,
) -> DMatrix<f64> {
    let c = super::CLONE_DIM * clones;
    let n = c + CORE_DIM;
    let mut ax = DMatrix::<f64>::identity(n, n);
    ax.view_mut((c, c), (CORE_DIM, CORE_DIM)).copy_from(a);
    let mut bx = DMatrix::<f64>::zeros(n, NOISE_DIM);
    bx.view_mut((c, 0), (CORE_DIM, NOISE_DIM)).copy_from(b);
    let wd = DMatrix::from_iterator(NOISE_DIM, NOISE_DIM, w.iter().cloned());
    &ax * p * ax.transpose() + &bx * wd * bx.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{InitialStd, CLONE_DIM};
    use nalgebra::Vector3;
    use crate::so3::Rotation;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| StandardNormal.sample(rng)) * scale
    }

    fn random_state(rng: &mut ChaCha8Rng) -> NavState {
        NavState {
            attitude: so3::exp(&randn(rng, 1.0)).unwrap(),
            velocity: randn(rng, 5.0),
            position: randn(rng, 10.0),
            accel_bias: randn(rng, 0.05),
            gyro_bias: randn(rng, 0.01),
        }
    }

    #[test]
    fn stationary_equilibrium_is_preserved() {
        let state = NavState {
            attitude: Rotation::identity(),
            velocity: Vector3::zeros(),
            position: Vector3::new(1.0, 2.0, 3.0),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        };
        let imu = ImuSample {
            t: 0.0,
            gyro: Vector3::zeros(),
            accel: Vector3::new(0.0, 0.0, 9.81),
        };
        let mut fs = FilterState::new(0.0, state, InitialStd::default().covariance(), 10);
        for _ in 0..100 {
            fs.propagate(&imu, 0.01, &NoiseParams::default()).unwrap();
        }
        assert!((fs.current.position - state.position).amax() < 1e-12);
        assert!(fs.current.velocity.amax() < 1e-12);
        assert!((fs.current.attitude.matrix() - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn block_propagation_matches_dense_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = random_state(&mut rng);
        let mut fs = FilterState::new(0.0, state, InitialStd::default().covariance(), 10);
        for _ in 0..3 {
            fs.augment();
            fs.propagate(
                &ImuSample { t: 0.0, gyro: randn(&mut rng, 1.0), accel: randn(&mut rng, 5.0) },
                0.01,
                &NoiseParams::default(),
            )
            .unwrap();
        }
        let imu = ImuSample { t: 0.0, gyro: randn(&mut rng, 1.0), accel: randn(&mut rng, 5.0) };
        let (a, b) = propagation_jacobians(&fs.current, &imu, 0.01);
        let w = process_noise(&NoiseParams::default(), 0.01);
        let dense = propagate_covariance_dense(fs.covariance(), fs.clones().len(), &a, &b, &w);
        let before = fs.covariance().clone();
        fs.propagate(&imu, 0.01, &NoiseParams::default()).unwrap();
        assert!((fs.covariance() - &dense).amax() < 1e-15);
        // clone-clone blocks are untouched
        let c = CLONE_DIM * fs.clones().len();
        assert_eq!(fs.covariance().view((0, 0), (c, c)), before.view((0, 0), (c, c)));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut fs = FilterState::new(0.0, random_state(&mut rng), InitialStd::default().covariance(), 10);
        let imu = ImuSample { t: 0.0, gyro: Vector3::zeros(), accel: Vector3::zeros() };
        assert!(matches!(fs.propagate(&imu, 0.0, &NoiseParams::default()), Err(Error::InvalidArgument(_))));
        assert!(matches!(fs.propagate(&imu, 0.06, &NoiseParams::default()), Err(Error::InvalidArgument(_))));
        let bad = ImuSample { accel: Vector3::new(f64::NAN, 0.0, 0.0), ..imu };
        assert!(matches!(fs.propagate(&bad, 0.01, &NoiseParams::default()), Err(Error::Propagation(_))));
    }
}
