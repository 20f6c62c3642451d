//! Backtracking line search with Armijo and curvature tests.

use super::{dot, OptimError, Oracle};

/// When a trial step is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearchMode {
    /// Accept as soon as either the Armijo or the curvature test passes.
    Either,
    /// Accept only when both tests pass (weak Wolfe conditions).
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub alpha0: f64,
    pub beta_reduce: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_backtracks: usize,
    pub mode: LineSearchMode,
}

impl LineSearchConfig {
    pub fn new(
        alpha0: f64,
        beta_reduce: f64,
        c1: f64,
        c2: f64,
        max_backtracks: usize,
        mode: LineSearchMode,
    ) -> Result<Self, OptimError> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(OptimError::Config(format!("initial step must be positive, got {alpha0}")));
        }
        if !(beta_reduce > 0.0 && beta_reduce < 1.0) {
            return Err(OptimError::Config(format!("backtracking factor must lie in (0, 1), got {beta_reduce}")));
        }
        if !(c1 > 0.0 && c1 < c2 && c2 <= 1.0) {
            return Err(OptimError::Config(format!("need 0 < c1 < c2 <= 1, got c1 = {c1}, c2 = {c2}")));
        }
        if max_backtracks == 0 {
            return Err(OptimError::Config("max_backtracks must be positive".into()));
        }
        Ok(Self { alpha0, beta_reduce, c1, c2, max_backtracks, mode })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub f_new: f64,
    /// Gradient at the accepted point.
    pub g_new: Vec<f64>,
    /// Number of step reductions before acceptance.
    pub backtracks: usize,
    /// No trial passed; `alpha = α₀·β^max_backtracks` was taken anyway.
    pub exhausted: bool,
}

/// Tries `α = α₀·β^k` for `k = 0..=max_backtracks` along `p` from `x`.
///
/// `f0` and `g0` are the objective and gradient at `x`. The gradient at a trial
/// point is only requested when the acceptance rule needs it, and the gradient at
/// the accepted point is always returned so the caller can form `y`.
pub fn line_search(
    oracle: &mut dyn Oracle,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    p: &[f64],
    cfg: &LineSearchConfig,
) -> Result<LineSearchResult, OptimError> {
    let slope = dot(g0, p);
    let mut alpha = cfg.alpha0;
    let mut trial = vec![0.0; x.len()];
    for k in 0..=cfg.max_backtracks {
        for ((t, &xi), &pi) in trial.iter_mut().zip(x).zip(p) {
            *t = xi + alpha * pi;
        }
        let f_t = oracle.value(&trial);
        if !f_t.is_finite() {
            return Err(OptimError::NonFinite { what: "objective during line search", iteration: k });
        }
        let armijo = f_t <= f0 + cfg.c1 * alpha * slope;
        let mut g_t = None;
        let accept = match cfg.mode {
            LineSearchMode::Either => {
                armijo || {
                    let g = oracle.gradient(&trial);
                    let ok = dot(p, &g) >= cfg.c2 * slope;
                    g_t = Some(g);
                    ok
                }
            }
            LineSearchMode::Both => {
                armijo && {
                    let g = oracle.gradient(&trial);
                    let ok = dot(p, &g) >= cfg.c2 * slope;
                    g_t = Some(g);
                    ok
                }
            }
        };
        let last = k == cfg.max_backtracks;
        if accept || last {
            let g_new = g_t.unwrap_or_else(|| oracle.gradient(&trial));
            if g_new.iter().any(|v| !v.is_finite()) {
                return Err(OptimError::NonFinite { what: "gradient during line search", iteration: k });
            }
            return Ok(LineSearchResult { alpha, f_new: f_t, g_new, backtracks: k, exhausted: !accept });
        }
        alpha *= cfg.beta_reduce;
    }
    unreachable!("loop returns on its last trial")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::FnOracle;

    fn parabola() -> FnOracle {
        FnOracle::new(1, |x| x[0] * x[0]).with_gradient(|x| vec![2.0 * x[0]])
    }

    #[test]
    fn steepest_descent_on_parabola_accepts_first_trial() {
        let mut o = parabola();
        let cfg = LineSearchConfig::new(0.5, 0.8, 1e-4, 0.9, 20, LineSearchMode::Both).unwrap();
        let r = line_search(&mut o, &[1.0], 1.0, &[2.0], &[-2.0], &cfg).unwrap();
        assert_eq!(r.alpha, 0.5);
        assert_eq!(r.backtracks, 0);
        assert!(!r.exhausted);
        assert_eq!(r.f_new, 0.0);
    }

    #[test]
    fn impossible_armijo_exhausts() {
        // the supplied slope claims descent but f increases along p, so Armijo never holds
        let mut o = FnOracle::new(1, |x| -x[0]).with_gradient(|_| vec![-1.0]);
        let cfg = LineSearchConfig::new(1.0, 0.5, 0.5, 0.9, 6, LineSearchMode::Both).unwrap();
        let r = line_search(&mut o, &[0.0], 0.0, &[1.0], &[-1.0], &cfg).unwrap();
        assert!(r.exhausted);
        assert_eq!(r.backtracks, 6);
        assert_eq!(r.alpha, 0.5f64.powi(6));
    }

    #[test]
    fn either_mode_accepts_on_curvature_alone() {
        // overshoot: Armijo fails at α = 1 but the directional derivative has flipped
        let mut o = parabola();
        let cfg = LineSearchConfig::new(1.0, 0.5, 1e-4, 0.9, 20, LineSearchMode::Either).unwrap();
        let r = line_search(&mut o, &[1.0], 1.0, &[2.0], &[-2.0], &cfg).unwrap();
        assert_eq!(r.backtracks, 0);
        let cfg = LineSearchConfig { mode: LineSearchMode::Both, ..cfg };
        let r = line_search(&mut o, &[1.0], 1.0, &[2.0], &[-2.0], &cfg).unwrap();
        assert_eq!(r.backtracks, 1);
        assert_eq!(r.alpha, 0.5);
    }

    #[test]
    fn invalid_constants_rejected() {
        assert!(LineSearchConfig::new(0.5, 0.8, 0.9, 0.5, 20, LineSearchMode::Both).is_err());
        assert!(LineSearchConfig::new(0.5, 1.0, 1e-4, 0.9, 20, LineSearchMode::Both).is_err());
        assert!(LineSearchConfig::new(0.0, 0.8, 1e-4, 0.9, 20, LineSearchMode::Both).is_err());
    }

    #[test]
    fn non_finite_objective_aborts() {
        let mut o = FnOracle::new(1, |x| if x[0] < 0.5 { f64::NAN } else { x[0] });
        let cfg = LineSearchConfig::new(1.0, 0.5, 1e-4, 0.9, 20, LineSearchMode::Both).unwrap();
        assert!(matches!(
            line_search(&mut o, &[1.0], 1.0, &[1.0], &[-1.0], &cfg),
            Err(OptimError::NonFinite { .. })
        ));
    }
}
