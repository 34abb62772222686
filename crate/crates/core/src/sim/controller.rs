//! Geometric tracking controller with differential-flatness feed-forward.
//!
//! Outputs mass-normalized collective thrust and body rates; the simulated
//! vehicle follows the body rates exactly, so there is no attitude loop
//! below this one.

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use super::track::ReferencePoint;
use crate::so3::Rotation;
use crate::GRAVITY;

#[derive(Debug, Clone, Copy)]
pub struct Controller {
    pub position_gain: f64,
    pub velocity_gain: f64,
    pub attitude_gain: f64,
    /// Body-frame linear drag the controller compensates, 1/s.
    pub drag: [f64; 3],
    pub max_thrust: f64,
    pub max_body_rate: f64,
}

/// One control output, held for a whole command period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub thrust: f64,
    pub body_rate: Vector3<f64>,
}

impl Controller {
    pub fn new(drag: [f64; 3], max_thrust: f64, max_body_rate: f64) -> Self {
        Self {
            position_gain: 6.0,
            velocity_gain: 4.5,
            attitude_gain: 12.0,
            drag,
            max_thrust,
            max_body_rate,
        }
    }

    /// Desired world-frame specific force (thrust direction times magnitude).
    fn desired_force(
        &self,
        reference: &ReferencePoint,
        position: &Vector3<f64>,
        velocity: &Vector3<f64>,
        attitude: &Rotation,
    ) -> Vector3<f64> {
        let accel = reference.acceleration
            + self.position_gain * (reference.position - position)
            + self.velocity_gain * (reference.velocity - velocity);
        let r = attitude.matrix();
        let drag = Matrix3::from_diagonal(&Vector3::from(self.drag));
        accel - GRAVITY + r * drag * r.transpose() * velocity
    }

    /// Attitude that points the thrust along `force` with the reference yaw.
    pub fn desired_attitude(force: &Vector3<f64>, yaw: f64, fallback: &Rotation) -> Rotation {
        let norm = force.norm();
        if norm < 1e-6 {
            return *fallback;
        }
        let z = force / norm;
        let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let y = z.cross(&heading);
        if y.norm() < 1e-6 {
            return *fallback;
        }
        let y = y.normalize();
        let x = y.cross(&z);
        Rotation::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
    }

    /// Attitude to start a flight from, consistent with the reference at `t₀`.
    pub fn initial_attitude(&self, reference: &ReferencePoint) -> Rotation {
        let mut attitude = Rotation::identity();
        for _ in 0..5 {
            let f = self.desired_force(reference, &reference.position, &reference.velocity, &attitude);
            attitude = Self::desired_attitude(&f, reference.yaw, &attitude);
        }
        attitude
    }

    pub fn command(
        &self,
        reference: &ReferencePoint,
        position: &Vector3<f64>,
        velocity: &Vector3<f64>,
        attitude: &Rotation,
    ) -> Command {
        let force = self.desired_force(reference, position, velocity, attitude);
        let desired = Self::desired_attitude(&force, reference.yaw, attitude);
        let z_des = desired.matrix().column(2).into_owned();
        let z_body = attitude.matrix().column(2).into_owned();
        let thrust = force.dot(&z_body).clamp(0.0, self.max_thrust);

        // Flatness feed-forward: rate of the thrust direction from jerk.
        let norm = force.norm().max(1e-6);
        let z_dot = (reference.jerk - z_des * z_des.dot(&reference.jerk)) / norm;
        let mut ff = desired.matrix().transpose() * z_des.cross(&z_dot);
        ff.z += reference.yaw_rate * z_des.z;

        let relative = attitude.inverse() * desired;
        let error = relative.log();
        let mut body_rate = relative.matrix() * ff + self.attitude_gain * error;
        let n = body_rate.norm();
        if n > self.max_body_rate {
            body_rate *= self.max_body_rate / n;
        }
        Command { thrust, body_rate }
    }
}
