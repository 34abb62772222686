//! Learned-inertial odometry for agile quadrotors.
//!
//! The crate couples an IMU-driven error-state EKF that keeps a sliding set of
//! cloned past poses with relative 3-DoF displacement measurements. The
//! displacements come from a [`providers::DisplacementProvider`]: a
//! ground-truth oracle, the closed-form thrust model, or a temporal
//! convolutional network evaluated by [`tcn`].
//!
//! Everything here is `no_std` (with `alloc`): file formats, the CLI and
//! logging setup live in the companion `imo` crate.
//!
//! ```
//! use imo_core::filter::{run_filter, FilterConfig};
//! use imo_core::providers::OracleProvider;
//! use imo_core::sim::{simulate, SimConfig, TrackKind};
//!
//! let mut config = SimConfig::new(TrackKind::default_lemniscate(), 3.0, 7);
//! config.drag = [0.0; 3];
//! let dataset = simulate(&config).unwrap();
//! let mut oracle = OracleProvider::new(&dataset.gt, 0.01, 7);
//! let run = run_filter(&dataset, &mut oracle, &FilterConfig::default()).unwrap();
//! assert_eq!(run.trajectory.len(), dataset.imu.len() + 1);
//! ```

#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod eval;
pub mod filter;
pub mod providers;
pub mod sim;
pub mod so3;
pub mod tcn;

pub use error::{Error, Result};

use nalgebra::Vector3;

/// Gravity in the world frame, z axis up.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// Stationary gravity magnitude as seen by an accelerometer, m/s².
pub const GRAVITY_MAGNITUDE: f64 = 9.81;
