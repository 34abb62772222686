use alloc::format;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{
    idx, symmetrize, CloneState, DisplacementMeasurement, FilterState, Rejection, CLONE_DIM,
    CLONE_TIME_TOLERANCE, CORE_DIM,
};

/// What an accepted update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateDiagnostics {
    /// `r = p̂_j − p̂_i − Δp̃` before the update.
    pub residual: Vector3<f64>,
    /// Innovation covariance `H·P·Hᵀ + Σ`.
    pub innovation_covariance: Matrix3<f64>,
    /// `rᵀ·S⁻¹·r`.
    pub mahalanobis: f64,
}

/// `H` for a displacement measured against clone `clone`: `−I₃` on the
/// clone's δp block, `+I₃` on the current δp block, zero elsewhere.
pub fn measurement_jacobian(clones: usize, clone: usize) -> DMatrix<f64> {
    let n = CLONE_DIM * clones + CORE_DIM;
    let mut h = DMatrix::zeros(3, n);
    let pi = CLONE_DIM * clone + 3;
    let pj = CLONE_DIM * clones + idx::POS;
    for k in 0..3 {
        h[(k, pi + k)] = -1.0;
        h[(k, pj + k)] = 1.0;
    }
    h
}

/// `(I − K·H)·P·(I − K·H)ᵀ + K·Σ·Kᵀ`, dense.
pub fn joseph_update(
    p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    h: &DMatrix<f64>,
    sigma: &Matrix3<f64>,
) -> DMatrix<f64> {
    let n = p.nrows();
    let i_kh = DMatrix::<f64>::identity(n, n) - k * h;
    let sigma = DMatrix::from_iterator(3, 3, sigma.iter().cloned());
    &i_kh * p * i_kh.transpose() + k * sigma * k.transpose()
}

impl FilterState {
    /// Clones the current pose. When the clone budget is full the oldest
    /// clone is marginalized first.
    pub fn augment(&mut self) {
        if self.clones().len() == self.max_clones() {
            self.marginalize_oldest();
        }
        let c = self.core_offset();
        let n = self.dim();
        // New ordering: old clones, new clone, current. Map each new index to
        // the old index it copies.
        let source = |i: usize| -> usize {
            if i < c {
                i
            } else if i < c + 3 {
                c + idx::THETA + (i - c)
            } else if i < c + CLONE_DIM {
                c + idx::POS + (i - c - 3)
            } else {
                i - CLONE_DIM
            }
        };
        let p = self.covariance();
        let grown = DMatrix::from_fn(n + CLONE_DIM, n + CLONE_DIM, |r, col| {
            p[(source(r), source(col))]
        });
        let clone = CloneState {
            attitude: self.current.attitude,
            position: self.current.position,
            t: self.time,
        };
        self.clones_mut().push_back(clone);
        self.set_covariance(grown);
    }

    /// Drops the oldest clone and its rows and columns.
    pub fn marginalize_oldest(&mut self) {
        if self.clones().is_empty() {
            return;
        }
        let p = self.covariance().clone();
        let n = p.nrows();
        let shrunk = p.view((CLONE_DIM, CLONE_DIM), (n - CLONE_DIM, n - CLONE_DIM)).into_owned();
        self.clones_mut().pop_front();
        self.set_covariance(shrunk);
    }

    /// Relative-displacement update against the clone at `meas.t_i`.
    ///
    /// `gate` is a threshold on the squared Mahalanobis distance of the
    /// innovation. A rejected measurement leaves the state untouched.
    pub fn update(
        &mut self,
        meas: &DisplacementMeasurement,
        gate: Option<f64>,
    ) -> Result<UpdateDiagnostics, Rejection> {
        if (meas.t_j - self.time).abs() > CLONE_TIME_TOLERANCE {
            return Err(Rejection::TimeMismatch {
                t_j: meas.t_j,
                now: self.time,
            });
        }
        let clone = self
            .find_clone(meas.t_i)
            .ok_or(Rejection::NoClone { t_i: meas.t_i })?;
        if !meas.delta.iter().chain(meas.covariance.iter()).all(|c| c.is_finite()) {
            return Err(Rejection::Invalid("non-finite measurement".into()));
        }

        let pi = self.clone_offset(clone) + 3;
        let pj = self.core_offset() + idx::POS;
        let p = self.covariance();

        let predicted = self.current.position - self.clones()[clone].position;
        let residual = predicted - meas.delta;

        // P·Hᵀ = P[:, pj] − P[:, pi]
        let pht = p.columns(pj, 3) - p.columns(pi, 3);
        // H·P·Hᵀ
        let hpht: Matrix3<f64> = (pht.rows(pj, 3) - pht.rows(pi, 3)).fixed_view::<3, 3>(0, 0).into_owned();
        let s = hpht + meas.covariance;
        let s = (s + s.transpose()) * 0.5;
        let chol = s
            .cholesky()
            .ok_or_else(|| Rejection::Invalid("innovation covariance not positive definite".into()))?;
        let s_inv = chol.inverse();
        let mahalanobis = residual.dot(&(s_inv * residual));
        if let Some(threshold) = gate {
            if !(mahalanobis <= threshold) {
                return Err(Rejection::Outlier {
                    distance: mahalanobis,
                });
            }
        }

        let s_inv_d = DMatrix::from_iterator(3, 3, s_inv.iter().cloned());
        let gain = &pht * s_inv_d;
        let correction: DVector<f64> = -(&gain * DVector::from_column_slice(residual.as_slice()));

        // Joseph form with the sparse H: A = (I − KH)P, then A(I − KH)ᵀ + KΣKᵀ.
        let hp = p.rows(pj, 3) - p.rows(pi, 3);
        let a = p - &gain * hp;
        let aht = a.columns(pj, 3) - a.columns(pi, 3);
        let sigma = DMatrix::from_iterator(3, 3, meas.covariance.iter().cloned());
        let mut updated = &a - aht * gain.transpose() + &gain * sigma * gain.transpose();
        symmetrize(&mut updated);
        if !updated.iter().all(|c| c.is_finite()) || !correction.iter().all(|c| c.is_finite()) {
            return Err(Rejection::Invalid(format!(
                "non-finite update at t = {}",
                self.time
            )));
        }

        self.apply_correction(&correction);
        self.set_covariance(updated);
        Ok(UpdateDiagnostics {
            residual,
            innovation_covariance: s,
            mahalanobis,
        })
    }
}
