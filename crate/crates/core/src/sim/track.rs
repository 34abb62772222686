//! Reference trajectories for the simulator.

use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Reference state at one instant: flat outputs and their derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Seven-gate loop used as the default race track. Metres, world frame.
pub const RACETRACK_WAYPOINTS: [[f64; 3]; 7] = [
    [0.0, 0.0, 2.0],
    [16.0, -6.0, 3.0],
    [30.0, 1.0, 4.0],
    [24.0, 15.0, 2.5],
    [9.0, 20.0, 3.5],
    [-8.0, 14.0, 2.0],
    [-11.0, 3.0, 3.0],
];

/// Nominal cruise speed used to time the race-track spline, m/s.
pub const RACETRACK_SPEED: f64 = 12.0;

/// Which reference to fly.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackKind {
    /// Constant position.
    Hover { position: Vector3<f64> },
    /// Gerono lemniscate `x = A sin ωt`, `y = B sin ωt cos ωt`, `z = z₀`.
    Lemniscate { a: f64, b: f64, omega: f64, z0: f64 },
    /// Periodic spline through [`RACETRACK_WAYPOINTS`].
    Racetrack,
    /// Periodic spline through user waypoints, timed by chord length / speed.
    Waypoints { points: Vec<Vector3<f64>>, speed: f64 },
}

impl TrackKind {
    /// 10 m × 10 m lemniscate at ω = 0.8 rad/s; top speed ≈ 11.3 m/s.
    pub fn default_lemniscate() -> Self {
        TrackKind::Lemniscate {
            a: 10.0,
            b: 10.0,
            omega: 0.8,
            z0: 2.0,
        }
    }

    /// Looks up a track by CLI name (`hover`, `lemniscate`, `racetrack`).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "hover" => Ok(TrackKind::Hover {
                position: Vector3::new(0.0, 0.0, 2.0),
            }),
            "lemniscate" => Ok(Self::default_lemniscate()),
            "racetrack" => Ok(TrackKind::Racetrack),
            other => Err(Error::InvalidArgument(
                alloc::format!("unknown track kind `{other}`").to_string(),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrackKind::Hover { .. } => "hover",
            TrackKind::Lemniscate { .. } => "lemniscate",
            TrackKind::Racetrack => "racetrack",
            TrackKind::Waypoints { .. } => "waypoints",
        }
    }
}

/// A continuous reference trajectory.
#[derive(Debug, Clone)]
pub enum Track {
    Hover(Vector3<f64>),
    Lemniscate { a: f64, b: f64, omega: f64, z0: f64 },
    Spline(PeriodicSpline),
}

/// Builds the reference for `kind`. `duration` only has to be positive; the
/// periodic tracks repeat as needed.
pub fn generate_track(kind: &TrackKind, duration: f64) -> Result<Track> {
    if !(duration > 0.0) {
        return Err(Error::invalid("track duration must be positive"));
    }
    match kind {
        TrackKind::Hover { position } => Ok(Track::Hover(*position)),
        &TrackKind::Lemniscate { a, b, omega, z0 } => {
            if !(omega > 0.0) || !a.is_finite() || !b.is_finite() || !z0.is_finite() {
                return Err(Error::invalid("lemniscate needs finite size and ω > 0"));
            }
            Ok(Track::Lemniscate { a, b, omega, z0 })
        }
        TrackKind::Racetrack => {
            let points: Vec<Vector3<f64>> = RACETRACK_WAYPOINTS
                .iter()
                .map(|p| Vector3::new(p[0], p[1], p[2]))
                .collect();
            Ok(Track::Spline(PeriodicSpline::through(&points, RACETRACK_SPEED)?))
        }
        TrackKind::Waypoints { points, speed } => {
            Ok(Track::Spline(PeriodicSpline::through(points, *speed)?))
        }
    }
}

impl Track {
    pub fn sample(&self, t: f64) -> ReferencePoint {
        match self {
            Track::Hover(p) => ReferencePoint {
                position: *p,
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
                jerk: Vector3::zeros(),
                yaw: 0.0,
                yaw_rate: 0.0,
            },
            &Track::Lemniscate { a, b, omega, z0 } => {
                let (s, c) = (omega * t).sin_cos();
                let (s2, c2) = (2.0 * omega * t).sin_cos();
                let w2 = omega * omega;
                let hb = 0.5 * b;
                ReferencePoint {
                    position: Vector3::new(a * s, hb * s2, z0),
                    velocity: Vector3::new(a * omega * c, hb * 2.0 * omega * c2, 0.0),
                    acceleration: Vector3::new(-a * w2 * s, -hb * 4.0 * w2 * s2, 0.0),
                    jerk: Vector3::new(-a * w2 * omega * c, -hb * 8.0 * w2 * omega * c2, 0.0),
                    yaw: 0.0,
                    yaw_rate: 0.0,
                }
            }
            Track::Spline(spline) => spline.sample(t),
        }
    }

    /// Period of the reference, if it repeats.
    pub fn period(&self) -> Option<f64> {
        match self {
            Track::Hover(_) => None,
            Track::Lemniscate { omega, .. } => Some(2.0 * core::f64::consts::PI / omega),
            Track::Spline(s) => Some(s.period()),
        }
    }
}

/// Closed C² cubic spline through waypoints, parameterized by time.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    knots: Vec<f64>,
    points: Vec<Vector3<f64>>,
    second: Vec<Vector3<f64>>,
}

impl PeriodicSpline {
    /// Knot spacing is chord length divided by `speed`.
    pub fn through(points: &[Vector3<f64>], speed: f64) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::invalid("spline needs at least three waypoints"));
        }
        if !(speed > 0.0) {
            return Err(Error::invalid("spline speed must be positive"));
        }
        let mut knots = Vec::with_capacity(n + 1);
        knots.push(0.0);
        for k in 0..n {
            let chord = (points[(k + 1) % n] - points[k]).norm();
            if !(chord > 1e-9) {
                return Err(Error::invalid("consecutive waypoints coincide"));
            }
            knots.push(knots[k] + chord / speed);
        }
        let h: Vec<f64> = (0..n).map(|k| knots[k + 1] - knots[k]).collect();

        // Cyclic system for the knot second derivatives.
        let mut system = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let prev = (k + n - 1) % n;
            system[(k, prev)] += h[prev];
            system[(k, k)] += 2.0 * (h[prev] + h[k]);
            system[(k, (k + 1) % n)] += h[k];
        }
        let lu = system.lu();
        let mut second = alloc::vec![Vector3::zeros(); n];
        for axis in 0..3 {
            let rhs = DVector::from_iterator(
                n,
                (0..n).map(|k| {
                    let prev = (k + n - 1) % n;
                    let next = (k + 1) % n;
                    6.0 * ((points[next][axis] - points[k][axis]) / h[k]
                        - (points[k][axis] - points[prev][axis]) / h[prev])
                }),
            );
            let m = lu
                .solve(&rhs)
                .ok_or_else(|| Error::invalid("singular spline system"))?;
            for k in 0..n {
                second[k][axis] = m[k];
            }
        }
        Ok(Self {
            knots,
            points: points.to_vec(),
            second,
        })
    }

    pub fn period(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Time at which the spline passes waypoint `k`.
    pub fn knot_time(&self, k: usize) -> f64 {
        self.knots[k]
    }

    pub fn sample(&self, t: f64) -> ReferencePoint {
        let n = self.points.len();
        let period = self.period();
        let mut tau = t % period;
        if tau < 0.0 {
            tau += period;
        }
        let k = self.knots[..n].iter().rposition(|&kt| kt <= tau).unwrap_or(0);
        let next = (k + 1) % n;
        let h = self.knots[k + 1] - self.knots[k];
        let (m0, m1) = (self.second[k], self.second[next]);
        let (y0, y1) = (self.points[k], self.points[next]);
        let a = self.knots[k + 1] - tau;
        let b = tau - self.knots[k];

        let position = m0 * (a * a * a / (6.0 * h))
            + m1 * (b * b * b / (6.0 * h))
            + (y0 / h - m0 * (h / 6.0)) * a
            + (y1 / h - m1 * (h / 6.0)) * b;
        let velocity = -m0 * (a * a / (2.0 * h)) + m1 * (b * b / (2.0 * h))
            - (y0 / h - m0 * (h / 6.0))
            + (y1 / h - m1 * (h / 6.0));
        let acceleration = m0 * (a / h) + m1 * (b / h);
        let jerk = (m1 - m0) / h;
        ReferencePoint {
            position,
            velocity,
            acceleration,
            jerk,
            yaw: 0.0,
            yaw_rate: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemniscate_starts_at_origin_height() {
        let track = generate_track(
            &TrackKind::Lemniscate {
                a: 5.0,
                b: 5.0,
                omega: 1.0,
                z0: 1.5,
            },
            10.0,
        )
        .unwrap();
        assert_eq!(track.sample(0.0).position, Vector3::new(0.0, 0.0, 1.5));
    }

    #[test]
    fn lemniscate_is_periodic() {
        let track = generate_track(&TrackKind::default_lemniscate(), 10.0).unwrap();
        let period = track.period().unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.173;
            let a = track.sample(t);
            let b = track.sample(t + period);
            assert!((a.position - b.position).amax() < 1e-12);
            assert!((a.velocity - b.velocity).amax() < 1e-12);
        }
    }

    #[test]
    fn lemniscate_derivatives_match_finite_differences() {
        let track = generate_track(&TrackKind::default_lemniscate(), 10.0).unwrap();
        let h = 1e-5;
        for i in 0..20 {
            let t = 0.37 * i as f64;
            let (m, p, c) = (track.sample(t - h), track.sample(t + h), track.sample(t));
            assert!(((p.position - m.position) / (2.0 * h) - c.velocity).amax() < 1e-6);
            assert!(((p.velocity - m.velocity) / (2.0 * h) - c.acceleration).amax() < 1e-6);
            assert!(((p.acceleration - m.acceleration) / (2.0 * h) - c.jerk).amax() < 1e-5);
        }
    }

    #[test]
    fn racetrack_passes_through_waypoints() {
        let track = generate_track(&TrackKind::Racetrack, 30.0).unwrap();
        let Track::Spline(spline) = &track else {
            panic!("racetrack should be a spline")
        };
        for (k, w) in RACETRACK_WAYPOINTS.iter().enumerate() {
            let p = spline.sample(spline.knot_time(k)).position;
            assert!((p - Vector3::new(w[0], w[1], w[2])).amax() < 1e-9, "gate {k}");
        }
    }

    #[test]
    fn racetrack_is_c2_at_knots_and_periodic() {
        let track = generate_track(&TrackKind::Racetrack, 30.0).unwrap();
        let Track::Spline(spline) = &track else {
            unreachable!()
        };
        let eps = 1e-9;
        for k in 0..RACETRACK_WAYPOINTS.len() {
            let t = spline.knot_time(k) + spline.period();
            let (l, r) = (spline.sample(t - eps), spline.sample(t + eps));
            assert!((l.position - r.position).amax() < 1e-6);
            assert!((l.velocity - r.velocity).amax() < 1e-6);
            assert!((l.acceleration - r.acceleration).amax() < 1e-6);
        }
    }

    #[test]
    fn unknown_track_is_rejected() {
        assert!(matches!(
            TrackKind::from_name("bogus"),
            Err(Error::InvalidArgument(_))
        ));
        assert!(generate_track(&TrackKind::Racetrack, 0.0).is_err());
    }
}
