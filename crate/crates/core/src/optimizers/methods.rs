//! Per-method iteration logic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::hyper::{self, Hyper, MethodOptions, ParamSpec, SpBfgsCorrection};
use super::linesearch::{line_search, LineSearchConfig, LineSearchMode};
use super::updates::{
    eigen_floor, ncg_coefficient, qbroyden_metric_update, regularized_inverse, regularized_solve, secant_penalty,
    update_bfgs, update_dfp, update_sp_bfgs, update_sr1, SecantPenaltyConfig, UpdateOutcome,
};
use super::{dot, norm, MetricApprox, OptimError, Oracle};
use crate::seed::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Method {
    #[serde(rename = "bfgs")]
    Bfgs,
    #[serde(rename = "dfp")]
    Dfp,
    #[serde(rename = "sr1")]
    Sr1,
    #[serde(rename = "ncg")]
    Ncg,
    #[serde(rename = "sp-bfgs")]
    SpBfgs,
    #[serde(rename = "qng-block")]
    QngBlock,
    #[serde(rename = "qng-diag")]
    QngDiag,
    #[serde(rename = "qbroyden")]
    QBroyden,
    #[serde(rename = "qbang")]
    QBang,
    #[serde(rename = "m-qng")]
    MQng,
    #[serde(rename = "spsa")]
    Spsa,
    #[serde(rename = "2spsa")]
    Spsa2,
    #[serde(rename = "qnspsa")]
    Qnspsa,
    #[serde(rename = "rcd")]
    Rcd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    QuasiNewton,
    NaturalGradient,
    Stochastic,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::Bfgs,
        Method::Dfp,
        Method::Sr1,
        Method::Ncg,
        Method::SpBfgs,
        Method::QngBlock,
        Method::QngDiag,
        Method::QBroyden,
        Method::QBang,
        Method::MQng,
        Method::Spsa,
        Method::Spsa2,
        Method::Qnspsa,
        Method::Rcd,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Bfgs => "bfgs",
            Method::Dfp => "dfp",
            Method::Sr1 => "sr1",
            Method::Ncg => "ncg",
            Method::SpBfgs => "sp-bfgs",
            Method::QngBlock => "qng-block",
            Method::QngDiag => "qng-diag",
            Method::QBroyden => "qbroyden",
            Method::QBang => "qbang",
            Method::MQng => "m-qng",
            Method::Spsa => "spsa",
            Method::Spsa2 => "2spsa",
            Method::Qnspsa => "qnspsa",
            Method::Rcd => "rcd",
        }
    }

    pub fn from_id(id: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.id() == id)
    }

    pub fn valid_ids() -> String {
        Method::ALL.map(|m| m.id()).join(", ")
    }

    pub fn family(self) -> Family {
        match self {
            Method::Bfgs | Method::Dfp | Method::Sr1 | Method::Ncg | Method::SpBfgs => Family::QuasiNewton,
            Method::QngBlock | Method::QngDiag | Method::QBroyden | Method::QBang | Method::MQng => {
                Family::NaturalGradient
            }
            Method::Spsa | Method::Spsa2 | Method::Qnspsa | Method::Rcd => Family::Stochastic,
        }
    }

    pub fn schema(self) -> &'static [ParamSpec] {
        match self {
            Method::Bfgs => &hyper::BFGS,
            Method::Dfp => &hyper::DFP,
            Method::Sr1 => &hyper::SR1,
            Method::Ncg => &hyper::NCG,
            Method::SpBfgs => &hyper::SP_BFGS,
            Method::QngBlock => &hyper::QNG_BLOCK,
            Method::QngDiag => &hyper::QNG_DIAG,
            Method::QBroyden => &hyper::QBROYDEN,
            Method::QBang => &hyper::QBANG,
            Method::MQng => &hyper::M_QNG,
            Method::Spsa => &hyper::SPSA,
            Method::Spsa2 => &hyper::SPSA2,
            Method::Qnspsa => &hyper::QNSPSA,
            Method::Rcd => &hyper::RCD,
        }
    }

    /// Line-search acceptance used unless overridden: SP-BFGS keeps the
    /// accept-on-either rule of its reference implementation.
    pub fn default_line_search_mode(self) -> LineSearchMode {
        match self {
            Method::SpBfgs => LineSearchMode::Either,
            _ => LineSearchMode::Both,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::from_id(s).ok_or_else(|| format!("unknown method `{s}`; valid ids: {}", Method::valid_ids()))
    }
}

/// Outcome of one iteration.
pub(crate) enum Step {
    /// `x` was updated; `grad_norm` is the norm of the gradient (estimate) the update used.
    Moved { grad_norm: f64 },
    /// The gradient at `x` is below the floor; `x` is unchanged.
    Stationary,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Counters {
    pub skipped_updates: usize,
    pub exhausted_line_searches: usize,
    pub backtracks: usize,
    pub resets: usize,
}

pub(crate) trait Stepper {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, floor: f64, rng: &mut Rng64)
        -> Result<Step, OptimError>;
    fn counters(&self) -> Counters;
}

pub(crate) fn build(method: Method, hyper: &Hyper, opts: &MethodOptions, dim: usize) -> Result<Box<dyn Stepper>, OptimError> {
    let h = |k: &str| hyper.get(k);
    let in_unit = |name: &str, v: f64, closed_low: bool| {
        let ok = if closed_low { (0.0..1.0).contains(&v) } else { v > 0.0 && v < 1.0 };
        if ok {
            Ok(v)
        } else {
            Err(OptimError::Config(format!("{name} must lie in {}0, 1), got {v}", if closed_low { "[" } else { "(" })))
        }
    };
    let positive = |name: &str, v: f64| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(OptimError::Config(format!("{name} must be positive, got {v}")))
        }
    };
    Ok(match method.family() {
        Family::QuasiNewton => {
            let ls = LineSearchConfig::new(
                h("alpha"),
                h("beta"),
                h("c1"),
                h("c2"),
                opts.max_backtracks,
                opts.line_search_mode.unwrap_or(method.default_line_search_mode()),
            )?;
            let update = match method {
                Method::Bfgs => Curvature::Bfgs,
                Method::Dfp => Curvature::Dfp,
                Method::Sr1 => Curvature::Sr1 { r: opts.sr1_skip },
                Method::SpBfgs => Curvature::SpBfgs {
                    pen: SecantPenaltyConfig::new(h("n0"), h("ns"))?,
                    correction: opts.sp_bfgs_correction,
                },
                Method::Ncg => Curvature::Ncg { sigma: positive("sigma", h("sigma"))?, restart_every: dim },
                _ => unreachable!(),
            };
            Box::new(QuasiNewton::new(dim, ls, update))
        }
        Family::NaturalGradient => {
            let alpha = positive("alpha", h("alpha"))?;
            let lambda = opts.metric_regularization;
            let delta = opts.adam_delta;
            match method {
                Method::QngBlock => Box::new(Qng { alpha, lambda, approx: MetricApprox::BlockDiagonal, counters: Counters::default() }),
                Method::QngDiag => Box::new(Qng { alpha, lambda, approx: MetricApprox::Diagonal, counters: Counters::default() }),
                Method::QBroyden | Method::QBang => {
                    let moments = if method == Method::QBang {
                        Some(Moments::new(dim, in_unit("beta1", h("beta1"), true)?, in_unit("beta2", h("beta2"), true)?))
                    } else {
                        None
                    };
                    Box::new(Broyden {
                        alpha,
                        eps: in_unit("epsilon", h("epsilon"), false)?,
                        lambda,
                        delta,
                        b_inv: None,
                        moments,
                        counters: Counters::default(),
                    })
                }
                Method::MQng => Box::new(MomentumQng {
                    alpha,
                    eps: in_unit("epsilon", h("epsilon"), false)?,
                    lambda,
                    delta,
                    metric: None,
                    moments: Moments::new(dim, in_unit("beta1", h("beta1"), true)?, in_unit("beta2", h("beta2"), true)?),
                    counters: Counters::default(),
                }),
                _ => unreachable!(),
            }
        }
        Family::Stochastic => match method {
            Method::Spsa | Method::Spsa2 => {
                let gains = SpsaGains {
                    a_init: positive("a_init", h("a_init"))?,
                    c_init: positive("c_init", h("c_init"))?,
                    big_a: if h("big_a") >= 0.0 { h("big_a") } else { return Err(OptimError::Config("big_a must be non-negative".into())) },
                    alpha: decay("alpha", h("alpha"))?,
                    gamma: decay("gamma", h("gamma"))?,
                };
                if method == Method::Spsa {
                    Box::new(Spsa { gains })
                } else {
                    Box::new(Spsa2 {
                        gains,
                        ah_init: positive("ah_init", h("ah_init"))?,
                        ch_init: positive("ch_init", h("ch_init"))?,
                        floor: opts.curvature_floor,
                        curvature: CurvatureAverage::new(dim),
                    })
                }
            }
            Method::Qnspsa => Box::new(Qnspsa {
                alpha: positive("alpha", h("alpha"))?,
                eps: positive("epsilon", h("epsilon"))?,
                floor: opts.curvature_floor,
                metric: CurvatureAverage::new(dim),
            }),
            Method::Rcd => {
                let gamma = h("gamma");
                if !(0.0..=1.0).contains(&gamma) {
                    return Err(OptimError::Config(format!("gamma must lie in [0, 1], got {gamma}")));
                }
                Box::new(Rcd { alpha: positive("alpha", h("alpha"))?, gamma })
            }
            _ => unreachable!(),
        },
    })
}

fn decay(name: &str, v: f64) -> Result<f64, OptimError> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(OptimError::Config(format!("{name} must lie in (0, 1], got {v}")))
    }
}

fn check_finite(v: &[f64], what: &'static str, k: usize) -> Result<(), OptimError> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(OptimError::NonFinite { what, iteration: k })
    }
}

fn matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).iter().copied().collect()
}

// ----------------------------------------------------------------------------
// quasi-Newton family

#[derive(Debug, Clone, Copy)]
enum Curvature {
    Bfgs,
    Dfp,
    Sr1 { r: f64 },
    SpBfgs { pen: SecantPenaltyConfig, correction: SpBfgsCorrection },
    Ncg { sigma: f64, restart_every: usize },
}

struct NcgMemory {
    p_prev: Vec<f64>,
    s_prev: Vec<f64>,
    y_prev: Vec<f64>,
    since_reset: usize,
}

struct QuasiNewton {
    ls: LineSearchConfig,
    update: Curvature,
    b: DMatrix<f64>,
    /// Objective and gradient at the current point, carried over from the last line search.
    cache: Option<(f64, Vec<f64>)>,
    ncg: Option<NcgMemory>,
    counters: Counters,
}

impl QuasiNewton {
    fn new(dim: usize, ls: LineSearchConfig, update: Curvature) -> Self {
        Self { ls, update, b: DMatrix::identity(dim, dim), cache: None, ncg: None, counters: Counters::default() }
    }

    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        let steepest: Vec<f64> = g.iter().map(|v| -v).collect();
        match self.update {
            Curvature::Ncg { sigma, restart_every } => {
                let Some(mem) = &self.ncg else { return steepest };
                if mem.since_reset >= restart_every {
                    self.counters.resets += 1;
                    self.ncg = None;
                    return steepest;
                }
                let Some(beta) = ncg_coefficient(g, &mem.y_prev, &mem.s_prev, &mem.p_prev, sigma) else {
                    self.counters.resets += 1;
                    self.ncg = None;
                    return steepest;
                };
                let p: Vec<f64> = steepest.iter().zip(&mem.p_prev).map(|(a, b)| a + beta * b).collect();
                if dot(&p, g) >= 0.0 {
                    self.counters.resets += 1;
                    self.ncg = None;
                    return steepest;
                }
                p
            }
            _ => matvec(&self.b, &steepest),
        }
    }
}

impl Stepper for QuasiNewton {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, floor: f64, _rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let (f, g) = match self.cache.take() {
            Some(c) => c,
            None => {
                let f = oracle.value(x);
                let g = oracle.gradient(x);
                if !f.is_finite() {
                    return Err(OptimError::NonFinite { what: "objective", iteration: k });
                }
                check_finite(&g, "gradient", k)?;
                (f, g)
            }
        };
        let grad_norm = norm(&g);
        if grad_norm < floor {
            self.cache = Some((f, g));
            return Ok(Step::Stationary);
        }
        let p = self.direction(&g);
        check_finite(&p, "search direction", k)?;
        let r = line_search(oracle, x, f, &g, &p, &self.ls)?;
        self.counters.backtracks += r.backtracks;
        if r.exhausted {
            self.counters.exhausted_line_searches += 1;
        }
        let s: Vec<f64> = p.iter().map(|v| r.alpha * v).collect();
        let y: Vec<f64> = r.g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let outcome = match self.update {
            Curvature::Bfgs => Some(update_bfgs(&self.b, &s, &y)),
            Curvature::Dfp => Some(update_dfp(&self.b, &s, &y)),
            Curvature::Sr1 { r } => Some(update_sr1(&self.b, &s, &y, r)),
            Curvature::SpBfgs { pen, correction } => {
                Some(update_sp_bfgs(&self.b, &s, &y, secant_penalty(&pen, norm(&s)), correction))
            }
            Curvature::Ncg { .. } => {
                let since = self.ncg.as_ref().map_or(0, |m| m.since_reset) + 1;
                self.ncg = Some(NcgMemory { p_prev: p.clone(), s_prev: s.clone(), y_prev: y, since_reset: since });
                None
            }
        };
        match outcome {
            Some(UpdateOutcome::Accepted(b)) => self.b = b,
            Some(UpdateOutcome::Skipped(_)) => self.counters.skipped_updates += 1,
            None => {}
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        self.cache = Some((r.f_new, r.g_new));
        Ok(Step::Moved { grad_norm })
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

// ----------------------------------------------------------------------------
// natural-gradient family

struct Qng {
    alpha: f64,
    lambda: f64,
    approx: MetricApprox,
    counters: Counters,
}

impl Stepper for Qng {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, floor: f64, _rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let g = oracle.gradient(x);
        check_finite(&g, "gradient", k)?;
        let grad_norm = norm(&g);
        if grad_norm < floor {
            return Ok(Step::Stationary);
        }
        let metric = oracle.metric(x, self.approx)?;
        let d = regularized_solve(&metric, &g, self.lambda)?;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi -= self.alpha * di;
        }
        Ok(Step::Moved { grad_norm })
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

/// Bias-corrected first and second moments.
struct Moments {
    beta1: f64,
    beta2: f64,
    m1: Vec<f64>,
    m2: Vec<f64>,
    t: i32,
}

impl Moments {
    fn new(dim: usize, beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2, m1: vec![0.0; dim], m2: vec![0.0; dim], t: 0 }
    }

    /// Folds `v` in and returns `(m̂₁, m̂₂)`.
    fn update(&mut self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.t += 1;
        for ((a, b), &vi) in self.m1.iter_mut().zip(self.m2.iter_mut()).zip(v) {
            *a = self.beta1 * *a + (1.0 - self.beta1) * vi;
            *b = self.beta2 * *b + (1.0 - self.beta2) * vi * vi;
        }
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        (self.m1.iter().map(|a| a / c1).collect(), self.m2.iter().map(|b| b / c2).collect())
    }
}

/// qBroyden, and qBang when `moments` is present.
struct Broyden {
    alpha: f64,
    eps: f64,
    lambda: f64,
    delta: f64,
    b_inv: Option<DMatrix<f64>>,
    moments: Option<Moments>,
    counters: Counters,
}

impl Stepper for Broyden {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, floor: f64, _rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let g = oracle.gradient(x);
        check_finite(&g, "gradient", k)?;
        let grad_norm = norm(&g);
        if grad_norm < floor {
            return Ok(Step::Stationary);
        }
        if self.b_inv.is_none() {
            let metric = oracle.metric(x, MetricApprox::BlockDiagonal)?;
            self.b_inv = Some(regularized_inverse(&metric, self.lambda)?);
        }
        let b_inv = self.b_inv.as_ref().expect("initialized above");
        let step: Vec<f64> = match &mut self.moments {
            None => matvec(b_inv, &g),
            Some(m) => {
                let (m1, m2) = m.update(&g);
                matvec(b_inv, &m1).iter().zip(&m2).map(|(d, v)| d / (v.sqrt() + self.delta)).collect()
            }
        };
        check_finite(&step, "update", k)?;
        for (xi, di) in x.iter_mut().zip(&step) {
            *xi -= self.alpha * di;
        }
        match qbroyden_metric_update(b_inv, &g, self.eps) {
            UpdateOutcome::Accepted(b) => self.b_inv = Some(b),
            UpdateOutcome::Skipped(_) => self.counters.skipped_updates += 1,
        }
        Ok(Step::Moved { grad_norm })
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

/// Natural gradient through a low-pass metric, smoothed by Adam-style moments.
struct MomentumQng {
    alpha: f64,
    eps: f64,
    lambda: f64,
    delta: f64,
    metric: Option<DMatrix<f64>>,
    moments: Moments,
    counters: Counters,
}

impl Stepper for MomentumQng {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, floor: f64, _rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let g = oracle.gradient(x);
        check_finite(&g, "gradient", k)?;
        let grad_norm = norm(&g);
        if grad_norm < floor {
            return Ok(Step::Stationary);
        }
        let fresh = oracle.metric(x, MetricApprox::BlockDiagonal)?;
        let metric = match self.metric.take() {
            None => fresh,
            Some(prev) => prev * (1.0 - self.eps) + fresh * self.eps,
        };
        let d = regularized_solve(&metric, &g, self.lambda)?;
        self.metric = Some(metric);
        let (m1, m2) = self.moments.update(&d);
        for ((xi, a), b) in x.iter_mut().zip(&m1).zip(&m2) {
            *xi -= self.alpha * a / (b.sqrt() + self.delta);
        }
        check_finite(x, "parameters", k)?;
        Ok(Step::Moved { grad_norm })
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

// ----------------------------------------------------------------------------
// stochastic family

/// SPSA gain sequences `a_k = a/(A + k + 1)^α` and `c_k = c/(k + 1)^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaGains {
    pub a_init: f64,
    pub c_init: f64,
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl SpsaGains {
    pub fn a(&self, k: usize) -> f64 {
        self.a_init / (self.big_a + k as f64 + 1.0).powf(self.alpha)
    }

    pub fn c(&self, k: usize) -> f64 {
        self.c_init / (k as f64 + 1.0).powf(self.gamma)
    }
}

/// Independent ±1 entries.
pub fn rademacher(rng: &mut Rng64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn offset(x: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (scale, dir) in terms {
        for (o, d) in out.iter_mut().zip(*dir) {
            *o += scale * d;
        }
    }
    out
}

/// Two-sided simultaneous-perturbation gradient estimate; 2 objective calls.
pub fn spsa_gradient(oracle: &mut dyn Oracle, x: &[f64], c: f64, delta: &[f64]) -> Vec<f64> {
    let fp = oracle.value(&offset(x, &[(c, delta)]));
    let fm = oracle.value(&offset(x, &[(-c, delta)]));
    let scale = (fp - fm) / (2.0 * c);
    delta.iter().map(|d| scale * d).collect()
}

struct Spsa {
    gains: SpsaGains,
}

impl Stepper for Spsa {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, _floor: f64, rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let delta = rademacher(rng, x.len());
        let g = spsa_gradient(oracle, x, self.gains.c(k), &delta);
        check_finite(&g, "gradient estimate", k)?;
        let a = self.gains.a(k);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= a * gi;
        }
        Ok(Step::Moved { grad_norm: norm(&g) })
    }

    fn counters(&self) -> Counters {
        Counters::default()
    }
}

/// Running mean of symmetric curvature samples with an identity prior before the first.
pub struct CurvatureAverage {
    pub mean: DMatrix<f64>,
    pub samples: usize,
}

impl CurvatureAverage {
    pub fn new(dim: usize) -> Self {
        Self { mean: DMatrix::identity(dim, dim), samples: 0 }
    }

    pub fn fold(&mut self, sample: &DMatrix<f64>) {
        self.samples += 1;
        let w = 1.0 / self.samples as f64;
        self.mean = &self.mean * (1.0 - w) + sample * w;
    }
}

fn symmetric_outer(a: &[f64], b: &[f64], scale: f64) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| 0.5 * scale * (a[i] * b[j] + b[i] * a[j]))
}

/// Rank-two symmetric Hessian sample from four objective calls.
/// Returns the gradient estimate as well.
pub fn spsa2_samples(
    oracle: &mut dyn Oracle,
    x: &[f64],
    c: f64,
    c_h: f64,
    d1: &[f64],
    d2: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let xp = offset(x, &[(c, d1)]);
    let xm = offset(x, &[(-c, d1)]);
    let fp = oracle.value(&xp);
    let fm = oracle.value(&xm);
    let fpp = oracle.value(&offset(&xp, &[(c_h, d2)]));
    let fmp = oracle.value(&offset(&xm, &[(c_h, d2)]));
    let g: Vec<f64> = d1.iter().map(|d| (fp - fm) / (2.0 * c) * d).collect();
    // δG_i = [(f(x+cΔ₁+c̃Δ₂) − f(x+cΔ₁)) − (f(x−cΔ₁+c̃Δ₂) − f(x−cΔ₁))] / c̃ · Δ₂_i
    let dg = ((fpp - fp) - (fmp - fm)) / c_h;
    (g, symmetric_outer(d2, d1, dg / (2.0 * c)))
}

struct Spsa2 {
    gains: SpsaGains,
    ah_init: f64,
    ch_init: f64,
    floor: f64,
    curvature: CurvatureAverage,
}

impl Stepper for Spsa2 {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, _floor: f64, rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let d1 = rademacher(rng, x.len());
        let d2 = rademacher(rng, x.len());
        let c_h = self.ch_init / (k as f64 + 1.0).powf(self.gains.gamma);
        let (g, sample) = spsa2_samples(oracle, x, self.gains.c(k), c_h, &d1, &d2);
        check_finite(&g, "gradient estimate", k)?;
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFinite { what: "Hessian sample", iteration: k });
        }
        // the first step has only the identity prior and uses the first-order gain
        let gain = if self.curvature.samples == 0 {
            self.gains.a(k)
        } else {
            self.ah_init / (self.gains.big_a + k as f64 + 1.0).powf(self.gains.alpha)
        };
        let h = eigen_floor(&self.curvature.mean, self.floor);
        let d = regularized_solve(&h, &g, 0.0)?;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi -= gain * di;
        }
        self.curvature.fold(&sample);
        Ok(Step::Moved { grad_norm: norm(&g) })
    }

    fn counters(&self) -> Counters {
        Counters::default()
    }
}

/// Fubini–Study metric sample from four fidelities around `x`.
pub fn qnspsa_metric_sample(
    oracle: &mut dyn Oracle,
    x: &[f64],
    eps: f64,
    d1: &[f64],
    d2: &[f64],
) -> Result<DMatrix<f64>, OptimError> {
    let f_pp = oracle.fidelity(x, &offset(x, &[(eps, d1), (eps, d2)]))?;
    let f_p = oracle.fidelity(x, &offset(x, &[(eps, d1)]))?;
    let f_mp = oracle.fidelity(x, &offset(x, &[(-eps, d1), (eps, d2)]))?;
    let f_m = oracle.fidelity(x, &offset(x, &[(-eps, d1)]))?;
    let df = f_pp - f_p - f_mp + f_m;
    Ok(symmetric_outer(d1, d2, -df / (4.0 * eps * eps)))
}

struct Qnspsa {
    alpha: f64,
    eps: f64,
    floor: f64,
    metric: CurvatureAverage,
}

impl Stepper for Qnspsa {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, _floor: f64, rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let d1 = rademacher(rng, x.len());
        let d2 = rademacher(rng, x.len());
        let g = spsa_gradient(oracle, x, self.eps, &d1);
        check_finite(&g, "gradient estimate", k)?;
        let sample = qnspsa_metric_sample(oracle, x, self.eps, &d1, &d2)?;
        let metric = eigen_floor(&self.metric.mean, self.floor);
        let d = regularized_solve(&metric, &g, 0.0)?;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi -= self.alpha * di;
        }
        self.metric.fold(&sample);
        Ok(Step::Moved { grad_norm: norm(&g) })
    }

    fn counters(&self) -> Counters {
        Counters::default()
    }
}

struct Rcd {
    alpha: f64,
    gamma: f64,
}

impl Stepper for Rcd {
    fn step(&mut self, oracle: &mut dyn Oracle, x: &mut [f64], k: usize, _floor: f64, rng: &mut Rng64)
        -> Result<Step, OptimError> {
        let j = rng.random_range(0..x.len());
        let d = oracle.partial(x, j);
        if !d.is_finite() {
            return Err(OptimError::NonFinite { what: "partial derivative", iteration: k });
        }
        x[j] -= self.alpha / (k as f64 + 1.0).powf(self.gamma) * d;
        Ok(Step::Moved { grad_norm: d.abs() })
    }

    fn counters(&self) -> Counters {
        Counters::default()
    }
}
