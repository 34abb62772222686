use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;

use super::{
    FilterConfig, FilterState, NavState, Rejection, UpdateDiagnostics, CLONE_TIME_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::providers::{BodySample, DisplacementProvider, DisplacementQuery, MeasurementWindow};
use crate::sim::Dataset;
use crate::so3::Rotation;

/// Filter output at one IMU timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub nav: NavState,
}

/// Update bookkeeping for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    /// Update instants reached.
    pub ticks: usize,
    pub accepted: usize,
    /// Ticks before the clone window had filled.
    pub rejected_no_clone: usize,
    pub rejected_outlier: usize,
    pub rejected_invalid: usize,
    /// Provider returned no measurement.
    pub provider_failures: usize,
}

impl UpdateStats {
    pub fn rejected(&self) -> usize {
        self.ticks - self.accepted
    }

    fn record(&mut self, rejection: &Rejection) {
        match rejection {
            Rejection::NoClone { .. } => self.rejected_no_clone += 1,
            Rejection::Outlier { .. } => self.rejected_outlier += 1,
            Rejection::Provider(_) => self.provider_failures += 1,
            Rejection::TimeMismatch { .. } | Rejection::Invalid(_) => self.rejected_invalid += 1,
        }
    }
}

/// Something the runner just did to the state, passed to observers.
#[derive(Debug, Clone, Copy)]
pub enum FilterEvent<'a> {
    Propagated,
    Augmented,
    Updated(&'a UpdateDiagnostics),
    Rejected(&'a Rejection),
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// One estimate per IMU timestamp plus the final one.
    pub trajectory: Vec<Estimate>,
    pub stats: UpdateStats,
    pub final_state: FilterState,
}

/// Runs the filter over `dataset` with displacement updates from `provider`.
pub fn run_filter<P: DisplacementProvider + ?Sized>(
    dataset: &Dataset,
    provider: &mut P,
    config: &FilterConfig,
) -> Result<FilterRun> {
    run_filter_observed(dataset, provider, config, |_, _| {})
}

#[derive(Clone, Copy)]
struct Past {
    attitude: Rotation,
    velocity: Vector3<f64>,
    gyro_bias: Vector3<f64>,
}

/// [`run_filter`] with a callback after every state change.
pub fn run_filter_observed<P, F>(
    dataset: &Dataset,
    provider: &mut P,
    config: &FilterConfig,
    mut observer: F,
) -> Result<FilterRun>
where
    P: DisplacementProvider + ?Sized,
    F: FnMut(&FilterState, &FilterEvent<'_>),
{
    config.validate()?;
    dataset.validate()?;
    let samples_per_tick = dataset.imu_rate / config.update_rate;
    if (samples_per_tick - samples_per_tick.round()).abs() > 1e-9 || samples_per_tick < 1.0 {
        return Err(Error::invalid(format!(
            "IMU rate {} Hz is not a multiple of the update rate {} Hz",
            dataset.imu_rate, config.update_rate
        )));
    }
    let samples_per_tick = samples_per_tick.round() as usize;
    let window_samples = (config.window * dataset.imu_rate).round() as usize;
    let dt_nominal = 1.0 / dataset.imu_rate;

    let gt0 = &dataset.gt[0];
    let err = &config.initial_errors;
    let initial = NavState {
        attitude: gt0.attitude.boxplus(&err.attitude),
        velocity: gt0.velocity + err.velocity,
        position: gt0.position,
        accel_bias: gt0.accel_bias + err.accel_bias,
        gyro_bias: gt0.gyro_bias + err.gyro_bias,
    };
    let mut state = FilterState::new(
        gt0.t,
        initial,
        config.initial_std.covariance(),
        config.max_clones,
    );
    let mut stats = UpdateStats::default();
    let mut trajectory = Vec::with_capacity(dataset.imu.len() + 1);
    let mut history: VecDeque<Past> = VecDeque::with_capacity(window_samples + 1);
    let wants_window = provider.needs_window();

    trajectory.push(Estimate {
        t: state.time,
        nav: state.current,
    });
    state.augment();
    observer(&state, &FilterEvent::Augmented);

    for (k, imu) in dataset.imu.iter().enumerate() {
        let t_next = dataset
            .gt
            .get(k + 1)
            .map(|s| s.t)
            .unwrap_or(imu.t + dt_nominal);
        if wants_window {
            if history.len() == window_samples {
                history.pop_front();
            }
            history.push_back(Past {
                attitude: state.current.attitude,
                velocity: state.current.velocity,
                gyro_bias: state.current.gyro_bias,
            });
        }
        state.propagate(imu, t_next - imu.t, &config.noise)?;
        // Pin the clock to the sample grid so clone lookups never drift.
        state.time = t_next;
        observer(&state, &FilterEvent::Propagated);

        if (k + 1) % samples_per_tick == 0 {
            stats.ticks += 1;
            let t_j = state.time;
            let t_i = t_j - config.window;
            let outcome = if state.find_clone(t_i).is_none() {
                Err(Rejection::NoClone { t_i })
            } else {
                let window = match (k + 1).checked_sub(window_samples) {
                    Some(first) if wants_window => {
                        window_from_history(dataset, &history, first, t_i, dt_nominal)
                    }
                    _ => None,
                };
                let query = DisplacementQuery {
                    t_i,
                    t_j,
                    window: window.as_ref(),
                };
                provider
                    .displacement(&query)
                    .and_then(|m| state.update(&m, config.gate))
            };
            match outcome {
                Ok(diag) => {
                    stats.accepted += 1;
                    observer(&state, &FilterEvent::Updated(&diag));
                }
                Err(rejection) => {
                    if let Rejection::Provider(reason) = &rejection {
                        log::debug!("no displacement at t = {t_j:.3}: {reason}");
                    } else if !matches!(rejection, Rejection::NoClone { .. }) {
                        log::debug!("update at t = {t_j:.3} rejected: {rejection}");
                    }
                    stats.record(&rejection);
                    observer(&state, &FilterEvent::Rejected(&rejection));
                }
            }
            state.augment();
            observer(&state, &FilterEvent::Augmented);
        }

        if !state.current.is_finite() {
            return Err(Error::Propagation(format!(
                "filter state became non-finite at t = {}",
                state.time
            )));
        }
        trajectory.push(Estimate {
            t: state.time,
            nav: state.current,
        });
    }

    Ok(FilterRun {
        trajectory,
        stats,
        final_state: state,
    })
}

fn window_from_history(
    dataset: &Dataset,
    history: &VecDeque<Past>,
    first: usize,
    t_i: f64,
    dt: f64,
) -> Option<MeasurementWindow> {
    let start = history.front()?;
    if (dataset.imu[first].t - t_i).abs() > CLONE_TIME_TOLERANCE {
        return None;
    }
    let samples = history.iter().enumerate().map(|(n, past)| {
        let imu = &dataset.imu[first + n];
        BodySample {
            attitude: past.attitude,
            body_rate: imu.gyro - past.gyro_bias,
            thrust: dataset.cmds[first + n].thrust,
        }
    });
    MeasurementWindow::from_body(t_i, dt, start.velocity, start.attitude, samples).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{DeadReckoning, OracleProvider};
    use crate::sim::{simulate, SimConfig, TrackKind};

    #[test]
    fn tick_bookkeeping() {
        let ds = simulate(&SimConfig::new(TrackKind::default_lemniscate(), 3.0, 1)).unwrap();
        let run = run_filter(&ds, &mut OracleProvider::new(&ds.gt, 0.01, 1), &FilterConfig::default())
            .unwrap();
        assert_eq!(run.trajectory.len(), 301);
        assert_eq!(run.stats.ticks, 60);
        assert_eq!(run.stats.rejected_no_clone, 9);
        assert_eq!(run.stats.accepted + run.stats.rejected_outlier, 51);
        assert_eq!(run.final_state.clones().len(), 10);
    }

    #[test]
    fn clones_span_the_window_at_every_update() {
        let ds = simulate(&SimConfig::new(TrackKind::default_lemniscate(), 2.0, 1)).unwrap();
        let mut spans = Vec::new();
        run_filter_observed(
            &ds,
            &mut OracleProvider::new(&ds.gt, 0.01, 1),
            &FilterConfig::default(),
            |s, e| {
                if let FilterEvent::Updated(_) = e {
                    spans.push(s.time - s.clones()[0].t);
                }
            },
        )
        .unwrap();
        assert!(!spans.is_empty());
        assert!(spans.iter().all(|s| (s - 0.5).abs() < 1e-9));
    }

    #[test]
    fn rejecting_provider_is_dead_reckoning() {
        let ds = simulate(&SimConfig::new(TrackKind::default_lemniscate(), 2.0, 4)).unwrap();
        let run = run_filter(&ds, &mut DeadReckoning, &FilterConfig::default()).unwrap();
        let mut nav = run.trajectory[0].nav;
        for (k, imu) in ds.imu.iter().enumerate() {
            nav = super::super::nominal_step(&nav, imu, ds.gt[k + 1].t - imu.t);
            assert_eq!(nav, run.trajectory[k + 1].nav);
        }
        assert_eq!(run.stats.accepted, 0);
    }
}
