//! The outer optimization loop.

use std::time::Instant;

use rand::SeedableRng;

use super::hyper::{Hyper, MethodOptions};
use super::methods::{build, Family, Method, Step};
use super::{OptimError, Oracle};
use crate::seed::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Tolerance {
    None,
    /// Stop once `|f − f*| ≤ ρ·|f*|`.
    Relative { rho: f64, optimum: f64 },
}

impl Tolerance {
    pub fn reached(&self, f: f64) -> bool {
        match *self {
            Tolerance::None => false,
            Tolerance::Relative { rho, optimum } => (f - optimum).abs() <= rho * optimum.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StopRule {
    pub max_iterations: usize,
    pub tolerance: Tolerance,
    /// Stop when the exact gradient norm drops below this floor.
    /// Ignored by stochastic methods, whose estimates are not exact gradients.
    pub gradient_floor: f64,
}

impl StopRule {
    pub fn max_iterations(max_iterations: usize) -> Self {
        Self { max_iterations, tolerance: Tolerance::None, gradient_floor: 1e-10 }
    }

    pub fn with_tolerance(mut self, rho: f64, optimum: f64) -> Self {
        self.tolerance = Tolerance::Relative { rho, optimum };
        self
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub theta: Vec<f64>,
    /// Exact objective at `theta`.
    pub f: f64,
    /// Norm of the gradient (or gradient estimate) the update used.
    pub grad_norm: f64,
    /// Cumulative oracle calls after the iteration.
    pub qcalls: u64,
    /// Seconds since the run started; machine dependent and not serialized.
    #[serde(skip)]
    pub wallclock: f64,
}

/// Equality ignores the machine-dependent `wallclock`.
impl PartialEq for IterationRecord {
    fn eq(&self, other: &Self) -> bool {
        self.theta == other.theta && self.f == other.f && self.grad_norm == other.grad_norm && self.qcalls == other.qcalls
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    GradientFloor,
    Tolerance,
    Failed { message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunDiagnostics {
    pub skipped_updates: usize,
    pub exhausted_line_searches: usize,
    pub backtracks: usize,
    pub direction_resets: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunTrace {
    pub method: Method,
    pub hyper: Hyper,
    pub theta0: Vec<f64>,
    pub f0: f64,
    pub history: Vec<IterationRecord>,
    pub final_theta: Vec<f64>,
    pub best_f: f64,
    /// The stop rule's tolerance was reached, or (without a tolerance) the
    /// gradient floor was.
    pub converged: bool,
    pub stop: StopReason,
    pub qcalls: u64,
    pub diagnostics: RunDiagnostics,
    #[serde(skip)]
    pub wallclock: f64,
}

impl RunTrace {
    pub fn failed(&self) -> bool {
        matches!(self.stop, StopReason::Failed { .. })
    }

    /// Objective after the last iteration (or at the start for an empty history).
    pub fn final_f(&self) -> f64 {
        self.history.last().map_or(self.f0, |r| r.f)
    }
}

/// Runs `method` from `theta0` until `stop` triggers.
///
/// `seed` drives the method's own randomness (perturbations, coordinate picks).
/// Failures never panic: a non-finite value or a failed metric solve ends the
/// run with [`StopReason::Failed`] and keeps the history gathered so far.
pub fn run(
    method: Method,
    oracle: &mut dyn Oracle,
    theta0: &[f64],
    hyper: &Hyper,
    options: &MethodOptions,
    stop: &StopRule,
    seed: u64,
) -> RunTrace {
    let start = Instant::now();
    let f0 = oracle.monitor(theta0);
    let mut trace = RunTrace {
        method,
        hyper: hyper.clone(),
        theta0: theta0.to_vec(),
        f0,
        history: Vec::with_capacity(stop.max_iterations.min(4096)),
        final_theta: theta0.to_vec(),
        best_f: f0,
        converged: false,
        stop: StopReason::MaxIterations,
        qcalls: oracle.qcalls(),
        diagnostics: RunDiagnostics::default(),
        wallclock: 0.0,
    };
    let finish = |mut trace: RunTrace, stop_reason: StopReason, oracle: &dyn Oracle| {
        trace.stop = stop_reason;
        trace.qcalls = oracle.qcalls();
        trace.wallclock = start.elapsed().as_secs_f64();
        trace
    };
    if stop.max_iterations == 0 {
        return finish(trace, StopReason::MaxIterations, oracle);
    }
    let mut stepper = match build(method, hyper, options, theta0.len()) {
        Ok(s) => s,
        Err(e) => return finish(trace, StopReason::Failed { message: e.to_string() }, oracle),
    };
    let floor = if method.family() == Family::Stochastic { 0.0 } else { stop.gradient_floor };
    let mut rng = Rng64::seed_from_u64(seed);
    let mut x = theta0.to_vec();
    let mut reason = StopReason::MaxIterations;
    for k in 0..stop.max_iterations {
        let step = stepper.step(oracle, &mut x, k, floor, &mut rng);
        let c = stepper.counters();
        trace.diagnostics = RunDiagnostics {
            skipped_updates: c.skipped_updates,
            exhausted_line_searches: c.exhausted_line_searches,
            backtracks: c.backtracks,
            direction_resets: c.resets,
        };
        let grad_norm = match step {
            Ok(Step::Moved { grad_norm }) => grad_norm,
            Ok(Step::Stationary) => {
                reason = StopReason::GradientFloor;
                trace.converged = stop.tolerance == Tolerance::None;
                break;
            }
            Err(e) => {
                reason = StopReason::Failed { message: e.to_string() };
                break;
            }
        };
        let f = oracle.monitor(&x);
        if !f.is_finite() || x.iter().any(|v| !v.is_finite()) {
            reason = StopReason::Failed { message: OptimError::NonFinite { what: "iterate", iteration: k }.to_string() };
            break;
        }
        trace.history.push(IterationRecord {
            theta: x.clone(),
            f,
            grad_norm,
            qcalls: oracle.qcalls(),
            wallclock: start.elapsed().as_secs_f64(),
        });
        trace.final_theta.clone_from(&x);
        trace.best_f = trace.best_f.min(f);
        if stop.tolerance.reached(f) {
            trace.converged = true;
            reason = StopReason::Tolerance;
            break;
        }
    }
    finish(trace, reason, oracle)
}
