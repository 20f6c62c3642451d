//! Curvature updates and small linear-algebra helpers shared by the methods.
//!
//! All matrices here approximate an *inverse* Hessian (or inverse metric) unless
//! noted otherwise, so the secant condition reads `B' y = s`.

// Guards are written as `!(x > bound)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};

use super::hyper::SpBfgsCorrection;
use super::OptimError;

/// Result of a guarded curvature update.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOutcome {
    Accepted(DMatrix<f64>),
    Skipped(&'static str),
}

impl UpdateOutcome {
    pub fn is_skipped(&self) -> bool {
        matches!(self, UpdateOutcome::Skipped(_))
    }

    pub fn unwrap(self) -> DMatrix<f64> {
        match self {
            UpdateOutcome::Accepted(m) => m,
            UpdateOutcome::Skipped(why) => panic!("update skipped: {why}"),
        }
    }
}

const CURVATURE_FLOOR: f64 = 1e-12;

fn vecs(s: &[f64], y: &[f64]) -> (DVector<f64>, DVector<f64>) {
    (DVector::from_column_slice(s), DVector::from_column_slice(y))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// BFGS inverse update `(I − ρsyᵀ) B (I − ρysᵀ) + ρssᵀ`, `ρ = 1/sᵀy`.
pub fn update_bfgs(b: &DMatrix<f64>, s: &[f64], y: &[f64]) -> UpdateOutcome {
    let (s, y) = vecs(s, y);
    let sy = s.dot(&y);
    if !(sy > CURVATURE_FLOOR * s.norm() * y.norm()) {
        return UpdateOutcome::Skipped("sᵀy below curvature floor");
    }
    let rho = 1.0 / sy;
    let n = s.len();
    let m = DMatrix::identity(n, n) - &s * y.transpose() * rho;
    let out = &m * b * m.transpose() + &s * s.transpose() * rho;
    UpdateOutcome::Accepted(symmetrize(out))
}

/// DFP inverse update `B + ssᵀ/sᵀy − ByyᵀB/yᵀBy`.
pub fn update_dfp(b: &DMatrix<f64>, s: &[f64], y: &[f64]) -> UpdateOutcome {
    let (s, y) = vecs(s, y);
    let sy = s.dot(&y);
    if !(sy > CURVATURE_FLOOR * s.norm() * y.norm()) {
        return UpdateOutcome::Skipped("sᵀy below curvature floor");
    }
    let by = b * &y;
    let yby = y.dot(&by);
    if !(yby > CURVATURE_FLOOR * y.norm() * by.norm()) {
        return UpdateOutcome::Skipped("yᵀBy below curvature floor");
    }
    let out = b + &s * s.transpose() / sy - &by * by.transpose() / yby;
    UpdateOutcome::Accepted(symmetrize(out))
}

/// Symmetric rank-one inverse update `B + ddᵀ/dᵀy`, `d = s − By`.
///
/// Skipped when `|dᵀy| < r‖d‖‖y‖`; positive definiteness is not enforced.
pub fn update_sr1(b: &DMatrix<f64>, s: &[f64], y: &[f64], r: f64) -> UpdateOutcome {
    let (s, y) = vecs(s, y);
    let d = &s - b * &y;
    if d.norm() <= CURVATURE_FLOOR * s.norm() {
        return UpdateOutcome::Skipped("secant already satisfied");
    }
    let dy = d.dot(&y);
    if !(dy.abs() >= r * d.norm() * y.norm()) || dy == 0.0 {
        return UpdateOutcome::Skipped("SR1 denominator below threshold");
    }
    let out = b + &d * d.transpose() / dy;
    UpdateOutcome::Accepted(symmetrize(out))
}

/// Linear noise model for the secant penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecantPenaltyConfig {
    pub n0: f64,
    pub ns: f64,
}

impl SecantPenaltyConfig {
    pub fn new(n0: f64, ns: f64) -> Result<Self, OptimError> {
        if !(n0 >= 0.0 && ns >= 0.0) {
            return Err(OptimError::Config(format!("secant penalty needs n0, ns >= 0, got {n0}, {ns}")));
        }
        Ok(Self { n0, ns })
    }
}

/// `β = max(N_s‖s‖ − N₀, 0)`.
pub fn secant_penalty(pen: &SecantPenaltyConfig, s_norm: f64) -> f64 {
    (pen.ns * s_norm - pen.n0).max(0.0)
}

/// Secant-penalized BFGS update for a given penalty `β`.
///
/// `β = 0` returns `B` unchanged (gradient-descent regime); `β → ∞` recovers BFGS.
pub fn update_sp_bfgs(
    b: &DMatrix<f64>,
    s: &[f64],
    y: &[f64],
    beta: f64,
    correction: SpBfgsCorrection,
) -> UpdateOutcome {
    if beta == 0.0 {
        return UpdateOutcome::Accepted(b.clone());
    }
    let (s, y) = vecs(s, y);
    let sy = s.dot(&y);
    let gamma = 1.0 / (sy + 1.0 / beta);
    let omega = 1.0 / (sy + 2.0 / beta);
    if !gamma.is_finite() || !omega.is_finite() {
        return UpdateOutcome::Skipped("penalized curvature denominator vanished");
    }
    let n = s.len();
    let m = DMatrix::identity(n, n) - &s * y.transpose() * omega;
    let yby = y.dot(&(b * &y));
    let coeff = match correction {
        SpBfgsCorrection::GammaMinusOmega => gamma - omega,
        SpBfgsCorrection::Zero => 0.0,
    };
    let scale = omega * (gamma / omega + coeff * yby);
    let out = &m * b * m.transpose() + &s * s.transpose() * scale;
    if out.iter().any(|v| !v.is_finite()) {
        return UpdateOutcome::Skipped("non-finite SP-BFGS update");
    }
    UpdateOutcome::Accepted(symmetrize(out))
}

/// Scaled conjugate-gradient coefficient `(yᵀg − sᵀg/σ) / yᵀp_prev`.
///
/// `σ = 1` gives Perry's coefficient, `σ → ∞` the Hestenes–Stiefel one. Returns
/// `None` when the denominator vanishes, which callers treat as a reset.
pub fn ncg_coefficient(g: &[f64], y: &[f64], s: &[f64], p_prev: &[f64], sigma: f64) -> Option<f64> {
    let den: f64 = y.iter().zip(p_prev).map(|(a, b)| a * b).sum();
    let scale = super::norm(y) * super::norm(p_prev);
    if !(den.abs() > CURVATURE_FLOOR * scale) {
        return None;
    }
    let yg: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
    let sg: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
    Some((yg - sg / sigma) / den)
}

/// Heavy-ball update `v' = m·v − α·d`, `θ' = θ + v'`.
pub fn momentum_step(theta: &[f64], v: &[f64], d: &[f64], alpha: f64, m: f64) -> (Vec<f64>, Vec<f64>) {
    let v_new: Vec<f64> = v.iter().zip(d).map(|(vi, di)| m * vi - alpha * di).collect();
    let theta_new = theta.iter().zip(&v_new).map(|(t, vi)| t + vi).collect();
    (theta_new, v_new)
}

/// Sherman–Morrison inverse of the low-pass metric `(1−ε)B + ε·ggᵀ`.
pub fn qbroyden_metric_update(b_inv: &DMatrix<f64>, g: &[f64], eps: f64) -> UpdateOutcome {
    let g = DVector::from_column_slice(g);
    let u = b_inv * &g;
    let den = 1.0 - eps * (1.0 - g.dot(&u));
    if !(den.abs() >= 1e-12) {
        return UpdateOutcome::Skipped("Sherman–Morrison denominator vanished");
    }
    let out = (b_inv - &u * u.transpose() * (eps / den)) / (1.0 - eps);
    UpdateOutcome::Accepted(symmetrize(out))
}

const PIVOT_RATIO: f64 = 1e-14;

fn regularized_cholesky(g: &DMatrix<f64>, lambda: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, OptimError> {
    let n = g.nrows();
    let a = symmetrize(g + DMatrix::identity(n, n) * lambda);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::Solve("metric has non-finite entries".into()));
    }
    let chol = a.cholesky().ok_or_else(|| OptimError::Solve("regularized metric is not positive definite".into()))?;
    let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|d| d * d).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > PIVOT_RATIO * max) {
        return Err(OptimError::Solve(format!("regularized metric is numerically singular (pivot ratio {:.3e})", min / max)));
    }
    Ok(chol)
}

/// Solves `(G + λI) d = rhs` by Cholesky.
pub fn regularized_solve(g: &DMatrix<f64>, rhs: &[f64], lambda: f64) -> Result<Vec<f64>, OptimError> {
    let chol = regularized_cholesky(g, lambda)?;
    Ok(chol.solve(&DVector::from_column_slice(rhs)).iter().copied().collect())
}

/// `(G + λI)⁻¹` by Cholesky.
pub fn regularized_inverse(g: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>, OptimError> {
    Ok(symmetrize(regularized_cholesky(g, lambda)?.inverse()))
}

/// Symmetric matrix with every eigenvalue replaced by `max(|λ|, floor)`.
pub fn eigen_floor(h: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = symmetrize(h.clone()).symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.abs().max(floor));
    symmetrize(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}
