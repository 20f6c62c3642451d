//! Bayesian hyperparameter optimization.
//!
//! A Gaussian-process surrogate ([`gp`]) with a Matérn kernel is refit on every
//! sweep: hyperparameters are mapped to the unit cube (log-scaled dimensions in log
//! space), observed values are standardized, and kernel length scales, signal
//! variance and noise are chosen by maximizing the marginal likelihood.
//!
//! Suggestions come from a portfolio of three acquisitions, all minimized over a
//! seeded candidate pool (512 uniform points plus 64 Gaussian perturbations, σ =
//! 0.1, of the incumbent):
//!
//! - lower confidence bound `μ − κσ` with `κ = 1.96`,
//! - negative expected improvement and
//! - negative probability of improvement, both with margin `ξ = 0.01`.
//!
//! One proposal is picked by hedge weights `softmax(η·gains)`; after the next
//! refit every acquisition's gain is decreased by the new posterior mean at its
//! last proposal. The first `n_init = 10` points are uniform random.
//!
//! Failed evaluations are observed as the worst finite value seen plus a margin,
//! recomputed from the log on every refit. Every random draw comes from one seeded
//! stream, so a [`TrialLog`] replays exactly.

pub mod gp;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bench::initial_point;
use crate::optimizers::{run, Hyper, Method, MethodOptions, Scale, StopRule, Tolerance};
use crate::problems::WeightedGraph;
use crate::qaoa_sim::{AnsatzConfig, Evaluator, ShotMode};
use crate::seed::{derive_seed, Rng64};
pub use gp::{fit_marginal_likelihood, GpModel, Matern, Smoothness};

#[derive(Debug, thiserror::Error)]
pub enum TunerError {
    #[error("kernel matrix is not positive definite even after jitter")]
    Cholesky,
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("budget {budget} is smaller than the {n_init} initial random points")]
    Budget { budget: usize, n_init: usize },
    #[error("trial log diverges from replay at iteration {0}")]
    ReplayMismatch(usize),
    #[error("trial log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One search dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dim {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub scale: Scale,
}

/// Box of named dimensions, normalized to `[0, 1]^d` for the surrogate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self, TunerError> {
        if dims.is_empty() {
            return Err(TunerError::Space("no dimensions".into()));
        }
        for d in &dims {
            if !(d.low.is_finite() && d.high.is_finite() && d.low < d.high) {
                return Err(TunerError::Space(format!("`{}` needs finite low < high, got [{}, {}]", d.name, d.low, d.high)));
            }
            if d.scale == Scale::Log && d.low <= 0.0 {
                return Err(TunerError::Space(format!("log-scaled `{}` needs a positive lower bound", d.name)));
            }
        }
        Ok(Self { dims })
    }

    /// The tuned subset of a method's schema. Dimensions whose published interval
    /// is degenerate are held at their default instead.
    pub fn for_method(method: Method) -> Result<Self, TunerError> {
        let dims = method
            .schema()
            .iter()
            .filter(|s| s.tuned && s.low < s.high)
            .map(|s| Dim { name: s.name.to_string(), low: s.low, high: s.high, scale: s.scale })
            .collect();
        Self::new(dims)
    }

    /// Restricts to the named dimensions, in the given order.
    pub fn subset(&self, names: &[&str]) -> Result<Self, TunerError> {
        let dims = names
            .iter()
            .map(|n| {
                self.dims.iter().find(|d| d.name == *n).cloned().ok_or_else(|| TunerError::Space(format!("unknown dimension `{n}`")))
            })
            .collect::<Result<_, _>>()?;
        Self::new(dims)
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn to_unit(&self, values: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(values)
            .map(|(d, &v)| match d.scale {
                Scale::Linear => (v - d.low) / (d.high - d.low),
                Scale::Log => (v.ln() - d.low.ln()) / (d.high.ln() - d.low.ln()),
            })
            .collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(unit)
            .map(|(d, &u)| {
                let u = u.clamp(0.0, 1.0);
                let v = match d.scale {
                    Scale::Linear => d.low + u * (d.high - d.low),
                    Scale::Log => (d.low.ln() + u * (d.high.ln() - d.low.ln())).exp(),
                };
                v.clamp(d.low, d.high)
            })
            .collect()
    }

    pub fn params(&self, unit: &[f64]) -> BTreeMap<String, f64> {
        self.dims.iter().map(|d| d.name.clone()).zip(self.from_unit(unit)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    /// Uniform draw during warm-up.
    Random,
    Lcb,
    Ei,
    Pi,
}

impl Acquisition {
    pub const PORTFOLIO: [Acquisition; 3] = [Acquisition::Lcb, Acquisition::Ei, Acquisition::Pi];
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `μ − κσ`.
pub fn lower_confidence_bound(mean: f64, variance: f64, kappa: f64) -> f64 {
    mean - kappa * variance.sqrt()
}

/// Expected improvement below `best` with margin `xi` (to be maximized).
pub fn expected_improvement(mean: f64, variance: f64, best: f64, xi: f64) -> f64 {
    let improvement = best - mean - xi;
    let sd = variance.sqrt();
    if sd == 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / sd;
    improvement * normal_cdf(z) + sd * normal_pdf(z)
}

/// Probability of improving on `best` by at least `xi` (to be maximized).
pub fn probability_of_improvement(mean: f64, variance: f64, best: f64, xi: f64) -> f64 {
    let improvement = best - mean - xi;
    let sd = variance.sqrt();
    if sd == 0.0 {
        return if improvement > 0.0 { 1.0 } else { 0.0 };
    }
    normal_cdf(improvement / sd)
}

/// Portfolio weights over [`Acquisition::PORTFOLIO`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hedge {
    pub gains: [f64; 3],
    pub eta: f64,
}

impl Hedge {
    pub fn new(eta: f64) -> Self {
        Self { gains: [0.0; 3], eta }
    }

    pub fn probabilities(&self) -> [f64; 3] {
        let scaled = self.gains.map(|g| self.eta * g);
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = scaled.map(|s| (s - max).exp());
        let total: f64 = w.iter().sum();
        w.map(|x| x / total)
    }

    pub fn choose(&self, rng: &mut Rng64) -> usize {
        let probs = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    /// Adds realized rewards (here: negated posterior means at the last proposals).
    pub fn update(&mut self, rewards: [f64; 3]) {
        for (g, r) in self.gains.iter_mut().zip(rewards) {
            *g += r;
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerOptions {
    pub n_init: usize,
    pub smoothness: Smoothness,
    /// Random restarts of the marginal-likelihood search besides the default start.
    pub likelihood_restarts: usize,
    pub kappa: f64,
    pub xi: f64,
    pub hedge_eta: f64,
    pub uniform_candidates: usize,
    pub local_candidates: usize,
    pub local_sd: f64,
    /// Failed trials score `worst + penalty_fraction·(worst − best)`, at least `worst + 1e-3`.
    pub penalty_fraction: f64,
}

impl Default for TunerOptions {
    fn default() -> Self {
        Self {
            n_init: 10,
            smoothness: Smoothness::FiveHalves,
            likelihood_restarts: 4,
            kappa: 1.96,
            xi: 0.01,
            hedge_eta: 1.0,
            uniform_candidates: 512,
            local_candidates: 64,
            local_sd: 0.1,
            penalty_fraction: 0.1,
        }
    }
}

/// One evaluated suggestion.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trial {
    pub iteration: usize,
    pub acquisition: Acquisition,
    pub params: BTreeMap<String, f64>,
    /// The suggestion in normalized coordinates.
    pub unit: Vec<f64>,
    /// Value the surrogate was given (the penalty for failed trials).
    pub value: f64,
    /// The objective's own value; absent when the evaluation failed.
    pub raw_value: Option<f64>,
    pub failed: bool,
    /// Cumulative oracle calls spent by the objective up to and including this trial.
    pub cost_qcalls: u64,
}

/// Append-only record of a tuning session, one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialLog {
    pub trials: Vec<Trial>,
}

impl TrialLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t).expect("trial serializes"));
            out.push('\n');
        }
        out
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, TunerError> {
        let mut trials: Vec<Trial> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Trial = serde_json::from_str(&line).map_err(|e| TunerError::Log(format!("line {}: {e}", i + 1)))?;
            if t.iteration != trials.len() {
                return Err(TunerError::Log(format!("line {}: expected iteration {}, found {}", i + 1, trials.len(), t.iteration)));
            }
            trials.push(t);
        }
        Ok(Self { trials })
    }

    pub fn write_trial(writer: &mut impl Write, trial: &Trial) -> Result<(), TunerError> {
        serde_json::to_writer(&mut *writer, trial).map_err(|e| TunerError::Log(e.to_string()))?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    /// Best non-failed trial (first one on ties).
    pub fn incumbent(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .filter(|t| !t.failed)
            .fold(None, |best: Option<&Trial>, t| match best {
                Some(b) if b.value <= t.value => Some(b),
                _ => Some(t),
            })
    }
}

/// What an objective returns for one suggestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// `None` marks a failed evaluation.
    pub value: Option<f64>,
    pub qcalls: u64,
}

/// Suggest/observe state machine.
#[derive(Debug, Clone)]
pub struct Tuner {
    space: SearchSpace,
    options: TunerOptions,
    rng: Rng64,
    hedge: Hedge,
    last_proposals: Option<[Vec<f64>; 3]>,
    log: TrialLog,
    model: Option<GpModel>,
}

impl Tuner {
    pub fn new(space: SearchSpace, seed: u64, options: TunerOptions) -> Self {
        let hedge = Hedge::new(options.hedge_eta);
        Self {
            space,
            options,
            rng: Rng64::seed_from_u64(derive_seed(seed, &["tuner"])),
            hedge,
            last_proposals: None,
            log: TrialLog::default(),
            model: None,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn log(&self) -> &TrialLog {
        &self.log
    }

    pub fn hedge(&self) -> &Hedge {
        &self.hedge
    }

    /// Surrogate fitted for the most recent model-based suggestion.
    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }

    /// Surrogate targets: failures replaced by the penalty, then standardized.
    fn targets(&self) -> (Vec<f64>, f64) {
        let finite: Vec<f64> = self.log.trials.iter().filter_map(|t| t.raw_value).collect();
        let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let penalty = if finite.is_empty() {
            0.0
        } else {
            hi + (self.options.penalty_fraction * (hi - lo)).max(1e-3)
        };
        let ys: Vec<f64> = self.log.trials.iter().map(|t| t.raw_value.unwrap_or(penalty)).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        (ys.iter().map(|y| (y - mean) / sd).collect(), penalty)
    }

    /// Next point in normalized coordinates and the acquisition that chose it.
    pub fn suggest(&mut self) -> Result<(Vec<f64>, Acquisition), TunerError> {
        let d = self.space.len();
        if self.log.trials.len() < self.options.n_init {
            let unit = (0..d).map(|_| self.rng.random::<f64>()).collect();
            return Ok((unit, Acquisition::Random));
        }
        let xs: Vec<Vec<f64>> = self.log.trials.iter().map(|t| t.unit.clone()).collect();
        let (ys, _) = self.targets();
        let model = fit_marginal_likelihood(self.options.smoothness, 0.0, &xs, &ys, self.options.likelihood_restarts + 1, &mut self.rng)?;
        if let Some(prev) = &self.last_proposals {
            let rewards = [0, 1, 2].map(|i| -model.posterior(&prev[i]).0);
            self.hedge.update(rewards);
        }
        let incumbent = (0..ys.len())
            .filter(|&i| !self.log.trials[i].failed)
            .min_by(|&a, &b| ys[a].total_cmp(&ys[b]))
            .unwrap_or(0);
        let best = ys[incumbent];
        let candidates = self.candidates(&xs[incumbent]);
        let picks = propose(&model, &candidates, best, self.options.kappa, self.options.xi);
        let proposals = picks.map(|i| candidates[i].clone());
        let which = self.hedge.choose(&mut self.rng);
        let unit = proposals[which].clone();
        self.last_proposals = Some(proposals);
        self.model = Some(model);
        Ok((unit, Acquisition::PORTFOLIO[which]))
    }

    fn candidates(&mut self, incumbent: &[f64]) -> Vec<Vec<f64>> {
        let d = incumbent.len();
        let normal = Normal::new(0.0, self.options.local_sd).expect("positive spread");
        let mut pool = Vec::with_capacity(self.options.uniform_candidates + self.options.local_candidates);
        for _ in 0..self.options.uniform_candidates {
            pool.push((0..d).map(|_| self.rng.random::<f64>()).collect());
        }
        for _ in 0..self.options.local_candidates {
            pool.push(incumbent.iter().map(|&c| (c + normal.sample(&mut self.rng)).clamp(0.0, 1.0)).collect());
        }
        pool
    }

    /// Records the evaluation of `unit` and returns the stored trial.
    pub fn observe(&mut self, unit: Vec<f64>, acquisition: Acquisition, observation: Observation) -> &Trial {
        let valid = observation.value.filter(|v| v.is_finite());
        let cost = self.log.trials.last().map_or(0, |t| t.cost_qcalls) + observation.qcalls;
        self.log.trials.push(Trial {
            iteration: self.log.trials.len(),
            acquisition,
            params: self.space.params(&unit),
            unit,
            value: 0.0,
            raw_value: valid,
            failed: valid.is_none(),
            cost_qcalls: cost,
        });
        let (_, penalty) = self.targets();
        let last = self.log.trials.last_mut().expect("just pushed");
        last.value = valid.unwrap_or(penalty);
        last
    }

    /// Re-observes a logged trial after checking that replay suggests the same point.
    pub fn replay(&mut self, trial: &Trial) -> Result<(), TunerError> {
        let (unit, acquisition) = self.suggest()?;
        if trial.iteration != self.log.trials.len() || unit != trial.unit || acquisition != trial.acquisition {
            return Err(TunerError::ReplayMismatch(trial.iteration));
        }
        let prev = self.log.trials.last().map_or(0, |t| t.cost_qcalls);
        let qcalls = trial.cost_qcalls.checked_sub(prev).ok_or(TunerError::ReplayMismatch(trial.iteration))?;
        self.observe(unit, acquisition, Observation { value: trial.raw_value, qcalls });
        Ok(())
    }
}

/// Indices of the LCB, EI and PI minimizers (first on ties) over `candidates`.
pub fn propose(model: &GpModel, candidates: &[Vec<f64>], best: f64, kappa: f64, xi: f64) -> [usize; 3] {
    let mut arg = [0usize; 3];
    let mut val = [f64::INFINITY; 3];
    for (i, c) in candidates.iter().enumerate() {
        let (m, v) = model.posterior(c);
        let scores = [
            lower_confidence_bound(m, v, kappa),
            -expected_improvement(m, v, best, xi),
            -probability_of_improvement(m, v, best, xi),
        ];
        for k in 0..3 {
            if scores[k] < val[k] {
                val[k] = scores[k];
                arg[k] = i;
            }
        }
    }
    arg
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_params: BTreeMap<String, f64>,
    pub best_value: f64,
    pub log: TrialLog,
}

/// Runs `budget` suggest/evaluate/observe sweeps against `objective`.
///
/// Trials in `resume` are replayed without calling the objective; `on_trial` sees
/// every newly evaluated trial (e.g. to append it to a log file).
pub fn minimize(
    space: SearchSpace,
    budget: usize,
    seed: u64,
    options: TunerOptions,
    resume: &[Trial],
    mut objective: impl FnMut(&BTreeMap<String, f64>) -> Observation,
    mut on_trial: impl FnMut(&Trial) -> Result<(), TunerError>,
) -> Result<TuneResult, TunerError> {
    if budget < options.n_init {
        return Err(TunerError::Budget { budget, n_init: options.n_init });
    }
    if resume.len() > budget {
        return Err(TunerError::Log(format!("log holds {} trials but the budget is {budget}", resume.len())));
    }
    let mut tuner = Tuner::new(space, seed, options);
    for t in resume {
        tuner.replay(t)?;
    }
    while tuner.log.trials.len() < budget {
        let (unit, acquisition) = tuner.suggest()?;
        let obs = objective(&tuner.space.params(&unit));
        let trial = tuner.observe(unit, acquisition, obs).clone();
        on_trial(&trial)?;
    }
    let log = tuner.log;
    let best = log.incumbent();
    Ok(TuneResult {
        best_params: best.map_or_else(BTreeMap::new, |t| t.params.clone()),
        best_value: best.map_or(f64::NAN, |t| t.value),
        log,
    })
}

/// Tuning protocol for one optimizer on one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub budget: usize,
    /// Optimizer runs averaged per trial.
    pub restarts: usize,
    pub layers: usize,
    pub shot_mode: ShotMode,
    pub max_iterations: usize,
    /// Optional early stop inside each run.
    pub tolerance: Tolerance,
    pub method_options: MethodOptions,
    pub tuner: TunerOptions,
    /// Restrict tuning to these hyperparameters (all tuned ones when `None`).
    pub dimensions: Option<Vec<String>>,
    pub seed: u64,
}

impl TuneConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            restarts: 20,
            layers: 1,
            shot_mode: ShotMode::Exact,
            max_iterations: 60,
            tolerance: Tolerance::None,
            method_options: MethodOptions::default(),
            tuner: TunerOptions::default(),
            dimensions: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: Hyper,
    pub best_value: f64,
    pub log: TrialLog,
}

/// Merges tuned values into the method's defaults.
pub fn hyper_from_params(method: Method, params: &BTreeMap<String, f64>) -> Hyper {
    params.iter().fold(Hyper::defaults(method), |h, (k, &v)| h.with(k, v))
}

/// Mean final objective over `restarts` runs of `method` at `hyper`.
///
/// Starting points are shared by every trial (common random numbers), so trials
/// differ only by their hyperparameters. Any failed run fails the whole trial.
pub fn restart_objective(method: Method, graph: &WeightedGraph, hyper: &Hyper, cfg: &TuneConfig) -> Observation {
    let config = match AnsatzConfig::new(graph.n_vertices(), cfg.layers, cfg.shot_mode) {
        Ok(c) => c,
        Err(_) => return Observation { value: None, qcalls: 0 },
    };
    let stop = StopRule { tolerance: cfg.tolerance, ..StopRule::max_iterations(cfg.max_iterations) };
    let runs: Vec<Option<(f64, u64)>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let r = r.to_string();
            let theta0 = initial_point(config.n_params(), derive_seed(cfg.seed, &["tune-init", &r]));
            let shot_seed = derive_seed(cfg.seed, &["tune-shots", method.id(), &r]);
            let mut eval = Evaluator::new(graph.clone(), config, shot_seed).ok()?;
            let method_seed = derive_seed(cfg.seed, &["tune-method", method.id(), &r]);
            let trace = run(method, &mut eval, &theta0, hyper, &cfg.method_options, &stop, method_seed);
            (!trace.failed()).then(|| (trace.final_f(), trace.qcalls))
        })
        .collect();
    let qcalls = runs.iter().flatten().map(|r| r.1).sum();
    if runs.iter().any(Option::is_none) || runs.is_empty() {
        return Observation { value: None, qcalls };
    }
    let mean = runs.iter().flatten().map(|r| r.0).sum::<f64>() / runs.len() as f64;
    Observation { value: Some(mean), qcalls }
}

/// Bayesian tuning of `method` on `graph`.
pub fn tune(
    method: Method,
    graph: &WeightedGraph,
    cfg: &TuneConfig,
    resume: &[Trial],
    on_trial: impl FnMut(&Trial) -> Result<(), TunerError>,
) -> Result<TuneOutcome, TunerError> {
    let mut space = SearchSpace::for_method(method)?;
    if let Some(names) = &cfg.dimensions {
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        space = space.subset(&names)?;
    }
    let result = minimize(
        space,
        cfg.budget,
        cfg.seed,
        cfg.tuner.clone(),
        resume,
        |params| restart_objective(method, graph, &hyper_from_params(method, params), cfg),
        on_trial,
    )?;
    Ok(TuneOutcome {
        best: hyper_from_params(method, &result.best_params),
        best_value: result.best_value,
        log: result.log,
    })
}
