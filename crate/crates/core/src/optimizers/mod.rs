//! Optimizer suite behind one interface.
//!
//! Every method consumes an [`Oracle`]: an objective that can also be asked for
//! gradients, single partial derivatives, metric tensors and state fidelities, and
//! that keeps its own call counter. [`run`] drives a [`Method`] from a starting
//! point under a [`StopRule`] and returns a [`RunTrace`].
//!
//! Families:
//!
//! - quasi-Newton with Armijo–Wolfe backtracking: `bfgs`, `dfp`, `sr1`, `ncg`, `sp-bfgs`
//! - natural gradient: `qng-block`, `qng-diag`, `qbroyden`, `qbang`, `m-qng`
//! - stochastic: `spsa`, `2spsa`, `qnspsa`, `rcd`

mod hyper;
mod linesearch;
mod methods;
mod run;
mod updates;

use nalgebra::DMatrix;

pub use hyper::{Hyper, HyperError, MethodOptions, ParamSpec, Scale, SpBfgsCorrection};
pub use linesearch::{line_search, LineSearchConfig, LineSearchMode, LineSearchResult};
pub use methods::{
    qnspsa_metric_sample, rademacher, spsa2_samples, spsa_gradient, CurvatureAverage, Family, Method, SpsaGains,
};
pub use run::{run, IterationRecord, RunDiagnostics, RunTrace, StopReason, StopRule, Tolerance};
pub use updates::{
    eigen_floor, momentum_step, ncg_coefficient, qbroyden_metric_update, regularized_solve, update_bfgs,
    update_dfp, update_sp_bfgs, update_sr1, secant_penalty, SecantPenaltyConfig, UpdateOutcome,
};

/// Which part of the metric tensor to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricApprox {
    Full,
    /// Keeps the `(γ_k, β_k)` block of every layer and zeroes inter-layer couplings.
    BlockDiagonal,
    Diagonal,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle does not provide {0}")]
    Unsupported(&'static str),
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("metric solve failed: {0}")]
    Solve(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Objective interface consumed by every optimizer.
///
/// `value`, `gradient`, `partial`, `metric` and `fidelity` are metered and may be
/// noisy. `monitor` is the exact, unmetered objective used only for bookkeeping
/// (history, convergence checks) and never influences an optimizer's decisions.
pub trait Oracle {
    fn dim(&self) -> usize;
    fn value(&mut self, x: &[f64]) -> f64;
    fn gradient(&mut self, x: &[f64]) -> Vec<f64>;
    fn partial(&mut self, x: &[f64], j: usize) -> f64;
    fn metric(&mut self, _x: &[f64], _approx: MetricApprox) -> Result<DMatrix<f64>, OracleError> {
        Err(OracleError::Unsupported("a metric tensor"))
    }
    fn fidelity(&mut self, _x: &[f64], _y: &[f64]) -> Result<f64, OracleError> {
        Err(OracleError::Unsupported("state fidelities"))
    }
    fn monitor(&mut self, x: &[f64]) -> f64;
    fn qcalls(&self) -> u64;
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send>;
type MatrixFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send>;

/// Closure-backed oracle for classical test functions.
///
/// Costs: value 1, partial 2, gradient `2·dim`, metric `dim(dim+1)/2`.
pub struct FnOracle {
    dim: usize,
    f: ScalarFn,
    grad: Option<VectorFn>,
    metric: Option<MatrixFn>,
    calls: u64,
}

impl FnOracle {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + 'static) -> Self {
        Self { dim, f: Box::new(f), grad: None, metric: None, calls: 0 }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + 'static) -> Self {
        self.grad = Some(Box::new(g));
        self
    }

    pub fn with_metric(mut self, m: impl Fn(&[f64]) -> DMatrix<f64> + Send + 'static) -> Self {
        self.metric = Some(Box::new(m));
        self
    }

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(x),
            None => (0..self.dim)
                .map(|j| {
                    let h = 1e-6 * (1.0 + x[j].abs());
                    let mut a = x.to_vec();
                    let mut b = x.to_vec();
                    a[j] += h;
                    b[j] -= h;
                    ((self.f)(&a) - (self.f)(&b)) / (2.0 * h)
                })
                .collect(),
        }
    }
}

impl Oracle for FnOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        self.calls += 2 * self.dim as u64;
        self.exact_gradient(x)
    }

    fn partial(&mut self, x: &[f64], j: usize) -> f64 {
        self.calls += 2;
        self.exact_gradient(x)[j]
    }

    fn metric(&mut self, x: &[f64], approx: MetricApprox) -> Result<DMatrix<f64>, OracleError> {
        let m = self.metric.as_ref().ok_or(OracleError::Unsupported("a metric tensor"))?;
        let d = self.dim as u64;
        self.calls += d * (d + 1) / 2;
        Ok(crate::qaoa_sim::restrict_metric(&m(x), approx))
    }

    fn monitor(&mut self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn qcalls(&self) -> u64 {
        self.calls
    }
}

/// Euclidean norm.
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
