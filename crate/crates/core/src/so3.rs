//! Rotation-group math: exponential and logarithm maps and the manifold
//! operators used by the filter.
//!
//! Rotations are stored as 3×3 matrices in the world-from-body convention.
//! Perturbations act on the left: `R ⊞ θ = Exp(θ)·R` and
//! `A ⊟ B = Log(A·Bᵀ)`.

use core::f64::consts::PI;
use core::ops::Mul;

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Axis-angle vector in radians.
pub type RotationVector = Vector3<f64>;

/// Below this angle exp/log switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Orthogonality error that triggers a renormalization.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Compositions between forced renormalizations.
pub const RENORMALIZE_EVERY: u32 = 1000;

/// An element of SO(3), `R^w_b`.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    matrix: Matrix3<f64>,
    compositions: u32,
}

impl PartialEq for Rotation {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// `[v]×`, the cross-product matrix.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] for the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Right Jacobian of SO(3): `Exp(φ + δ) ≈ Exp(φ)·Exp(Jr(φ)·δ)`.
pub fn right_jacobian(phi: &RotationVector) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() - 0.5 * k + (1.0 / 6.0) * k * k;
    }
    let t2 = theta * theta;
    Matrix3::identity() - ((1.0 - theta.cos()) / t2) * k
        + ((theta - theta.sin()) / (t2 * theta)) * k * k
}

/// Exponential map. Fails on non-finite input.
pub fn exp(theta: &RotationVector) -> Result<Rotation> {
    if !theta.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("rotation vector has non-finite components"));
    }
    Ok(Rotation::from_matrix_unchecked(exp_matrix(theta)))
}

fn exp_matrix(theta: &RotationVector) -> Matrix3<f64> {
    let angle = theta.norm();
    let k = skew(theta);
    if angle < SMALL_ANGLE {
        Matrix3::identity() + k + 0.5 * k * k
    } else {
        Matrix3::identity()
            + (angle.sin() / angle) * k
            + ((1.0 - angle.cos()) / (angle * angle)) * k * k
    }
}

/// Logarithm map, principal branch (`‖θ‖ ≤ π`).
pub fn log(r: &Rotation) -> RotationVector {
    let m = &r.matrix;
    let cos = 0.5 * (m.trace() - 1.0);
    // w = sin(angle)·axis
    let w = vee(m);
    let sin = w.norm();
    let angle = sin.atan2(cos);

    if angle < SMALL_ANGLE {
        return w * (1.0 + sin * sin / 6.0);
    }
    if cos > -0.9 {
        return w * (angle / sin);
    }

    // Near π the antisymmetric part vanishes; recover the axis from
    // (R + Rᵀ)/2 = cos·I + (1 − cos)·aaᵀ and take the sign from w.
    let sym = 0.5 * (m + m.transpose());
    let outer = (sym - Matrix3::identity() * cos) / (1.0 - cos);
    let mut col = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(col, col)] {
            col = i;
        }
    }
    let mut axis: Vector3<f64> = outer.column(col).into_owned() / outer[(col, col)].sqrt();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

impl Rotation {
    pub fn identity() -> Self {
        Self::from_matrix_unchecked(Matrix3::identity())
    }

    /// Wraps `m` without checking it.
    pub fn from_matrix_unchecked(matrix: Matrix3<f64>) -> Self {
        Self {
            matrix,
            compositions: 0,
        }
    }

    /// Projects a nearly-orthonormal matrix onto SO(3). Rejects matrices that
    /// are not finite or are further than `1e-3` from a rotation.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self> {
        if !matrix.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let err = orthogonality_error(&matrix);
        if err > 1e-3 || matrix.determinant() < 0.0 {
            return Err(Error::invalid("matrix is not a rotation"));
        }
        Ok(Self::from_matrix_unchecked(polar(&matrix)))
    }

    /// Builds a rotation from a Hamilton quaternion `[w, x, y, z]`. The input
    /// is normalized first.
    pub fn from_quaternion_wxyz(q: [f64; 4]) -> Result<Self> {
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid("quaternion has zero or non-finite norm"));
        }
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        Ok(Self::from_matrix_unchecked(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )))
    }

    /// Hamilton quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn to_quaternion_wxyz(&self) -> [f64; 4] {
        let m = &self.matrix;
        let tr = m.trace();
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ]
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ]
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ]
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            [
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ]
        };
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
        [sign * q[0] / n, sign * q[1] / n, sign * q[2] / n, sign * q[3] / n]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            compositions: self.compositions,
        }
    }

    pub fn log(&self) -> RotationVector {
        log(self)
    }

    /// Geodesic angle to the identity, radians.
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// `‖R·Rᵀ − I‖` (max-abs entry).
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.matrix)
    }

    /// Nearest rotation in the Frobenius sense.
    pub fn renormalized(&self) -> Self {
        Self::from_matrix_unchecked(polar(&self.matrix))
    }

    /// `Exp(θ)·R`.
    pub fn boxplus(&self, theta: &RotationVector) -> Self {
        Self::from_matrix_unchecked(exp_matrix(theta)).compose_counted(self)
    }

    /// `Log(self·otherᵀ)`, the left difference.
    pub fn boxminus(&self, other: &Self) -> RotationVector {
        log(&Self::from_matrix_unchecked(
            self.matrix * other.matrix.transpose(),
        ))
    }

    /// Geodesic interpolation, `s ∈ [0, 1]`.
    pub fn slerp(&self, other: &Self, s: f64) -> Self {
        let delta = log(&Self::from_matrix_unchecked(
            self.matrix.transpose() * other.matrix,
        ));
        *self * Self::from_matrix_unchecked(exp_matrix(&(delta * s)))
    }

    fn compose_counted(&self, rhs: &Self) -> Self {
        let matrix = self.matrix * rhs.matrix;
        let compositions = self.compositions.max(rhs.compositions) + 1;
        if compositions >= RENORMALIZE_EVERY
            || orthogonality_error(&matrix) > ORTHOGONALITY_TOLERANCE
        {
            Self::from_matrix_unchecked(polar(&matrix))
        } else {
            Self {
                matrix,
                compositions,
            }
        }
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose_counted(&rhs)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.matrix * rhs
    }
}

impl Mul<&Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * rhs
    }
}

fn orthogonality_error(m: &Matrix3<f64>) -> f64 {
    (m * m.transpose() - Matrix3::identity()).amax()
}

fn polar(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return *m,
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Additive/multiplicative update pair used for every state component.
pub trait Manifold: Sized {
    type Tangent;

    fn boxplus(&self, delta: &Self::Tangent) -> Self;
    fn boxminus(&self, other: &Self) -> Self::Tangent;
}

impl Manifold for Rotation {
    type Tangent = RotationVector;

    fn boxplus(&self, delta: &RotationVector) -> Self {
        Rotation::boxplus(self, delta)
    }

    fn boxminus(&self, other: &Self) -> RotationVector {
        Rotation::boxminus(self, other)
    }
}

impl Manifold for Vector3<f64> {
    type Tangent = Vector3<f64>;

    fn boxplus(&self, delta: &Vector3<f64>) -> Self {
        self + delta
    }

    fn boxminus(&self, other: &Self) -> Vector3<f64> {
        self - other
    }
}

/// Rotation about `axis` (not necessarily unit) by `angle` radians.
pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Rotation {
    Rotation::from_matrix_unchecked(exp_matrix(&(axis.normalize() * angle)))
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}
