//! Benchmark orchestration and metrics.
//!
//! A sweep runs every `(problem, method, stop mode, restart)` combination from a
//! seeded uniform starting point in `[−π, π]^{2p}` and keeps one [`RunRecord`] per
//! run. Reports are pure functions of the records: [`aggregate`] folds the records
//! of one `(problem, method, stop mode)` cell into a [`MethodReport`], summing
//! sorted values so that run order never matters.
//!
//! Seeds are derived per run from the master seed with hierarchical labels:
//!
//! - starting point: `["init", problem, restart]` (shared by all methods),
//! - method randomness: `["method", problem, method, restart]`,
//! - shot noise: `["shots", problem, method, restart]`,
//! - final bitstring sample: `["hamming", problem, method, restart]`.
//!
//! The stop mode is not part of any key, so the 3%-stop run is a prefix of the
//! max-iteration run from the same restart.
//!
//! Wallclock times are machine dependent; they live in [`RunTiming`] records that are
//! kept out of the deterministic report files. As a machine-independent cost per
//! iteration the reports use qCalls per iteration.

mod landscape;
mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

pub use landscape::{grid_offsets, landscape_scan, random_directions, LandscapeGrid};
pub use metrics::{
    centroid_gap, first_within, is_converged, lipschitz_estimate, quantile, step_slopes, summarize,
    trajectory_lipschitz, within_tolerance, LipschitzPooling, LipschitzStats, MIN_STEP,
};

use crate::optimizers::{run, Family, Hyper, IterationRecord, Method, MethodOptions, RunDiagnostics, StopReason, StopRule};
use crate::problems::{brute_force, GroundTruth, ProblemError, WeightedGraph};
use crate::qaoa_sim::{sample_state, AnsatzConfig, Evaluator, ShotMode, SimError};
use crate::seed::{derive_seed, Rng64};

/// Version of every file layout written by this module.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("only {kept} of {total} runs reach the {rho} tolerance; at least half are required")]
    InsufficientRuns { kept: usize, total: usize, rho: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

/// Uniform starting point in `[−π, π]^dim`.
pub fn initial_point(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = <Rng64 as rand::SeedableRng>::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}

/// A named graph with its brute-force solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub graph: WeightedGraph,
    pub truth: GroundTruth,
}

impl Problem {
    pub fn new(name: impl Into<String>, graph: WeightedGraph) -> Result<Self, BenchError> {
        let truth = brute_force(&graph)?;
        Ok(Self { name: name.into(), graph, truth })
    }

    pub fn descriptor(&self) -> ProblemDescriptor {
        ProblemDescriptor {
            name: self.name.clone(),
            n_vertices: self.graph.n_vertices(),
            n_edges: self.graph.edges().len(),
            graph_seed: self.graph.seed(),
            optimal_value: self.truth.optimal_value,
            optimal_assignments: self.truth.optimal_assignments.iter().map(ToString::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProblemDescriptor {
    pub name: String,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub graph_seed: u64,
    pub optimal_value: f64,
    pub optimal_assignments: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StopMode {
    /// Run to the iteration cap.
    MaxIterations,
    /// Also stop once within `rho` of the optimum.
    Tolerance { rho: f64 },
}

impl StopMode {
    pub fn label(&self) -> String {
        match self {
            StopMode::MaxIterations => "max-iter".into(),
            StopMode::Tolerance { rho } => format!("tol-{rho}"),
        }
    }
}

/// One optimizer configuration in a sweep. Labels must be unique; several
/// labels may share a method with different hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub method: Method,
    pub hyper: Hyper,
}

impl MethodSpec {
    pub fn defaults(method: Method) -> Self {
        Self { label: method.id().into(), method, hyper: Hyper::defaults(method) }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub restarts: usize,
    pub layers: usize,
    pub shot_mode: ShotMode,
    pub quasi_newton_cap: usize,
    pub natural_gradient_cap: usize,
    pub stochastic_cap: usize,
    /// Overrides every family cap.
    pub max_iterations: Option<usize>,
    pub stop_modes: Vec<StopMode>,
    /// Tolerance of the convergence flag.
    pub convergence_rho: f64,
    /// Runs must come this close to the optimum to enter the Lipschitz statistics.
    pub lipschitz_rho: f64,
    /// Only the first iterations of each trajectory enter the Lipschitz statistics.
    pub lipschitz_cap: usize,
    pub lipschitz_pooling: LipschitzPooling,
    pub hamming_shots: usize,
    pub method_options: MethodOptions,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            restarts: 20,
            layers: 1,
            shot_mode: ShotMode::Sampled { shots: 512 },
            quasi_newton_cap: 60,
            natural_gradient_cap: 60,
            stochastic_cap: 400,
            max_iterations: None,
            stop_modes: vec![StopMode::MaxIterations, StopMode::Tolerance { rho: 0.03 }],
            convergence_rho: 0.03,
            lipschitz_rho: 0.01,
            lipschitz_cap: 20,
            lipschitz_pooling: LipschitzPooling::PerRunMax,
            hamming_shots: 512,
            method_options: MethodOptions::default(),
        }
    }
}

impl Protocol {
    pub fn cap(&self, method: Method) -> usize {
        self.max_iterations.unwrap_or(match method.family() {
            Family::QuasiNewton => self.quasi_newton_cap,
            Family::NaturalGradient => self.natural_gradient_cap,
            Family::Stochastic => self.stochastic_cap,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RunSeeds {
    pub init: u64,
    pub method: u64,
    pub shots: u64,
    pub hamming: u64,
}

impl RunSeeds {
    pub fn derive(master: u64, problem: &str, method: Method, restart: usize) -> Self {
        let r = restart.to_string();
        Self {
            init: derive_seed(master, &["init", problem, &r]),
            method: derive_seed(master, &["method", problem, method.id(), &r]),
            shots: derive_seed(master, &["shots", problem, method.id(), &r]),
            hamming: derive_seed(master, &["hamming", problem, method.id(), &r]),
        }
    }
}

/// Everything that determines a run; a stored record is reused only if its
/// setup matches exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunSetup {
    pub problem: String,
    pub label: String,
    pub method: Method,
    pub hyper: Hyper,
    pub stop_mode: StopMode,
    pub restart: usize,
    pub max_iterations: usize,
    pub layers: usize,
    pub shot_mode: ShotMode,
    pub options: MethodOptions,
    pub convergence_rho: f64,
    pub hamming_shots: usize,
    pub seeds: RunSeeds,
}

/// Modal bitstring of a final sample versus the optimal cuts.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HammingSummary {
    pub shots: usize,
    /// Vertex 0 first.
    pub modal_bitstring: String,
    pub modal_count: usize,
    /// Complement-invariant distance to the nearest optimal assignment.
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub setup: RunSetup,
    pub theta0: Vec<f64>,
    pub f0: f64,
    pub trajectory: Vec<IterationRecord>,
    pub stop: StopReason,
    pub diagnostics: RunDiagnostics,
    /// Within `convergence_rho` of the optimum at some iteration.
    pub converged: bool,
    pub iterations_to_convergence: Option<usize>,
    pub qcalls_to_convergence: Option<u64>,
    pub final_f: f64,
    pub best_f: f64,
    pub total_qcalls: u64,
    pub hamming: HammingSummary,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        matches!(self.stop, StopReason::Failed { .. })
    }

    pub fn iterations(&self) -> usize {
        self.trajectory.len()
    }

    /// `(θ, f)` points starting at `θ₀`, truncated after `cap` iterations.
    pub fn points(&self, cap: usize) -> Vec<(&[f64], f64)> {
        std::iter::once((&self.theta0[..], self.f0))
            .chain(self.trajectory.iter().take(cap).map(|r| (&r.theta[..], r.f)))
            .collect()
    }

    /// `L̂` over the whole trajectory.
    pub fn lipschitz(&self) -> Option<f64> {
        trajectory_lipschitz(&self.points(usize::MAX))
    }

    pub fn qcalls_per_iteration(&self) -> Option<f64> {
        (self.iterations() > 0).then(|| self.total_qcalls as f64 / self.iterations() as f64)
    }

    pub fn qcalls_per_iteration_to_convergence(&self) -> Option<f64> {
        Some(self.qcalls_to_convergence? as f64 / self.iterations_to_convergence? as f64)
    }
}

/// Wallclock measurements of a freshly executed run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunTiming {
    pub problem: String,
    pub label: String,
    pub stop_mode: StopMode,
    pub restart: usize,
    pub walltime_s: f64,
    pub walltime_to_convergence_s: Option<f64>,
}

/// Executes one run.
pub fn run_single(problem: &Problem, setup: &RunSetup) -> Result<(RunRecord, RunTiming), BenchError> {
    let config = AnsatzConfig::new(problem.graph.n_vertices(), setup.layers, setup.shot_mode)?;
    let mut eval = Evaluator::new(problem.graph.clone(), config, setup.seeds.shots)?;
    let theta0 = initial_point(config.n_params(), setup.seeds.init);
    let optimum = problem.truth.optimal_value;
    let mut stop = StopRule::max_iterations(setup.max_iterations);
    if let StopMode::Tolerance { rho } = setup.stop_mode {
        stop = stop.with_tolerance(rho, optimum);
    }
    let trace = run(setup.method, &mut eval, &theta0, &setup.hyper, &setup.options, &stop, setup.seeds.method);

    let hit = first_within(trace.history.iter().map(|r| r.f), optimum, setup.convergence_rho);
    let mut rng = <Rng64 as rand::SeedableRng>::seed_from_u64(setup.seeds.hamming);
    let psi = eval.state(&trace.final_theta);
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in sample_state(&psi, setup.hamming_shots, &mut rng) {
        *counts.entry(a.to_index()).or_default() += 1;
    }
    let (modal, modal_count) =
        counts.iter().fold((0usize, 0usize), |best, (&i, &c)| if c > best.1 { (i, c) } else { best });
    let assignment = crate::problems::CutAssignment::from_index(modal, problem.graph.n_vertices());
    let hamming = HammingSummary {
        shots: setup.hamming_shots,
        modal_bitstring: assignment.to_string(),
        modal_count,
        distance: problem.truth.distance_to_nearest(&assignment)?,
    };
    let timing = RunTiming {
        problem: setup.problem.clone(),
        label: setup.label.clone(),
        stop_mode: setup.stop_mode,
        restart: setup.restart,
        walltime_s: trace.wallclock,
        walltime_to_convergence_s: hit.map(|k| trace.history[k].wallclock),
    };
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        setup: setup.clone(),
        final_f: trace.final_f(),
        best_f: trace.best_f,
        theta0,
        f0: trace.f0,
        converged: hit.is_some(),
        iterations_to_convergence: hit.map(|k| k + 1),
        qcalls_to_convergence: hit.map(|k| trace.history[k].qcalls),
        total_qcalls: trace.qcalls,
        stop: trace.stop,
        diagnostics: trace.diagnostics,
        trajectory: trace.history,
        hamming,
    };
    Ok((record, timing))
}

/// Aggregates of one `(problem, method, stop mode)` cell. Means marked
/// "converged" use converged runs only; all others use every run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MethodReport {
    pub problem: String,
    pub label: String,
    pub method: Method,
    pub stop_mode: StopMode,
    pub runs: usize,
    pub failed_runs: usize,
    pub converged_runs: usize,
    pub convergence_ratio: f64,
    pub mean_final_f: Option<f64>,
    pub mean_best_f: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub mean_qcalls: Option<f64>,
    /// Runs with at least one iteration.
    pub mean_qcalls_per_iteration: Option<f64>,
    /// Converged runs.
    pub mean_iterations_to_convergence: Option<f64>,
    /// Converged runs.
    pub mean_qcalls_to_convergence: Option<f64>,
    /// Converged runs; the machine-independent time per iteration to convergence.
    pub mean_qcalls_per_iteration_to_convergence: Option<f64>,
    pub mean_hamming_distance: Option<f64>,
    /// Runs within `lipschitz_rho` during their first `lipschitz_cap` iterations.
    pub lipschitz: Option<LipschitzStats>,
    pub lipschitz_note: Option<String>,
}

/// Mean of the values after sorting, so the result does not depend on their order.
pub fn order_free_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Folds the records of one cell into a report.
pub fn aggregate(records: &[&RunRecord], optimum: f64, protocol: &Protocol) -> MethodReport {
    let first = records.first().map(|r| &r.setup);
    let n = records.len();
    let converged: Vec<&&RunRecord> = records.iter().filter(|r| r.converged).collect();
    let runs: Vec<Vec<(&[f64], f64)>> = records.iter().map(|r| r.points(protocol.lipschitz_cap)).collect();
    let (lipschitz, lipschitz_note) =
        match lipschitz_estimate(&runs, optimum, protocol.lipschitz_rho, protocol.lipschitz_pooling) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
    MethodReport {
        problem: first.map_or_else(String::new, |s| s.problem.clone()),
        label: first.map_or_else(String::new, |s| s.label.clone()),
        method: first.map_or(Method::Bfgs, |s| s.method),
        stop_mode: first.map_or(StopMode::MaxIterations, |s| s.stop_mode),
        runs: n,
        failed_runs: records.iter().filter(|r| r.failed()).count(),
        converged_runs: converged.len(),
        convergence_ratio: if n == 0 { 0.0 } else { converged.len() as f64 / n as f64 },
        mean_final_f: order_free_mean(records.iter().map(|r| r.final_f)),
        mean_best_f: order_free_mean(records.iter().map(|r| r.best_f)),
        mean_iterations: order_free_mean(records.iter().map(|r| r.iterations() as f64)),
        mean_qcalls: order_free_mean(records.iter().map(|r| r.total_qcalls as f64)),
        mean_qcalls_per_iteration: order_free_mean(records.iter().filter_map(|r| r.qcalls_per_iteration())),
        mean_iterations_to_convergence: order_free_mean(converged.iter().filter_map(|r| r.iterations_to_convergence.map(|k| k as f64))),
        mean_qcalls_to_convergence: order_free_mean(converged.iter().filter_map(|r| r.qcalls_to_convergence.map(|q| q as f64))),
        mean_qcalls_per_iteration_to_convergence: order_free_mean(converged.iter().filter_map(|r| r.qcalls_per_iteration_to_convergence())),
        mean_hamming_distance: order_free_mean(records.iter().map(|r| r.hamming.distance as f64)),
        lipschitz,
        lipschitz_note,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub problem: ProblemDescriptor,
    pub stop_mode: StopMode,
    pub methods: Vec<MethodReport>,
}

/// Mean wallclock figures of one cell, from freshly executed runs only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimingReport {
    pub problem: String,
    pub label: String,
    pub stop_mode: StopMode,
    pub timed_runs: usize,
    pub mean_walltime_s: Option<f64>,
    pub mean_walltime_to_convergence_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub records: Vec<RunRecord>,
    /// Present for runs executed in this invocation (not for resumed ones).
    pub timings: Vec<RunTiming>,
    pub reports: Vec<BenchmarkReport>,
    pub timing_reports: Vec<TimingReport>,
    pub reused_runs: usize,
}

impl BenchmarkOutput {
    pub fn method_reports(&self) -> impl Iterator<Item = &MethodReport> {
        self.reports.iter().flat_map(|r| &r.methods)
    }

    pub fn report(&self, problem: &str, label: &str, stop_mode: StopMode) -> Option<&MethodReport> {
        self.method_reports().find(|m| m.problem == problem && m.label == label && m.stop_mode == stop_mode)
    }

    pub fn records_of<'a>(&'a self, problem: &'a str, label: &'a str, stop_mode: StopMode) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.setup.problem == problem && r.setup.label == label && r.setup.stop_mode == stop_mode)
    }
}

/// Per-run record files under `<dir>/records/` used to resume a sweep.
#[derive(Debug, Clone)]
pub struct RecordStore {
    dir: PathBuf,
}

impl RecordStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, setup: &RunSetup) -> PathBuf {
        self.dir
            .join("records")
            .join(&setup.problem)
            .join(&setup.label)
            .join(setup.stop_mode.label())
            .join(format!("restart-{:04}.json", setup.restart))
    }

    /// A stored record whose setup equals `setup`, if any.
    pub fn load(&self, setup: &RunSetup) -> Option<RunRecord> {
        let text = fs::read_to_string(self.path(setup)).ok()?;
        let record: RunRecord = serde_json::from_str(&text).ok()?;
        (record.schema_version == SCHEMA_VERSION && &record.setup == setup).then_some(record)
    }

    /// Writes through a temporary file so an interrupted write never leaves a partial record.
    pub fn save(&self, record: &RunRecord) -> Result<(), BenchError> {
        let path = self.path(&record.setup);
        let parent = path.parent().expect("record path has a parent");
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string(record).map_err(|e| BenchError::Format(e.to_string()))?;
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

/// Every run setup of a sweep, in report order.
pub fn sweep_setups(problems: &[Problem], methods: &[MethodSpec], protocol: &Protocol, seed: u64) -> Vec<RunSetup> {
    let mut out = Vec::new();
    for problem in problems {
        for spec in methods {
            for &stop_mode in &protocol.stop_modes {
                for restart in 0..protocol.restarts {
                    out.push(RunSetup {
                        problem: problem.name.clone(),
                        label: spec.label.clone(),
                        method: spec.method,
                        hyper: spec.hyper.clone(),
                        stop_mode,
                        restart,
                        max_iterations: protocol.cap(spec.method),
                        layers: protocol.layers,
                        shot_mode: protocol.shot_mode,
                        options: protocol.method_options.clone(),
                        convergence_rho: protocol.convergence_rho,
                        hamming_shots: protocol.hamming_shots,
                        seeds: RunSeeds::derive(seed, &problem.name, spec.method, restart),
                    });
                }
            }
        }
    }
    out
}

/// Runs (or resumes from `store`) a full sweep and aggregates it.
///
/// Runs execute on the current rayon pool; the output does not depend on its size.
pub fn run_benchmark(
    problems: &[Problem],
    methods: &[MethodSpec],
    protocol: &Protocol,
    seed: u64,
    store: Option<&RecordStore>,
) -> Result<BenchmarkOutput, BenchError> {
    let mut labels: Vec<&str> = methods.iter().map(|m| m.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(BenchError::Format("method labels must be unique".into()));
    }
    let by_name: BTreeMap<&str, &Problem> = problems.iter().map(|p| (p.name.as_str(), p)).collect();
    let setups = sweep_setups(problems, methods, protocol, seed);
    let results: Vec<(RunRecord, Option<RunTiming>)> = setups
        .par_iter()
        .map(|setup| {
            if let Some(record) = store.and_then(|s| s.load(setup)) {
                return Ok((record, None));
            }
            let (record, timing) = run_single(by_name[setup.problem.as_str()], setup)?;
            if let Some(s) = store {
                s.save(&record)?;
            }
            Ok((record, Some(timing)))
        })
        .collect::<Result<_, BenchError>>()?;
    let reused_runs = results.iter().filter(|r| r.1.is_none()).count();
    let (records, timings): (Vec<RunRecord>, Vec<Option<RunTiming>>) = results.into_iter().unzip();
    let timings: Vec<RunTiming> = timings.into_iter().flatten().collect();
    let (reports, timing_reports) = build_reports(problems, methods, protocol, &records, &timings);
    Ok(BenchmarkOutput { records, timings, reports, timing_reports, reused_runs })
}

/// Reports over existing records; a pure function of its inputs.
pub fn build_reports(
    problems: &[Problem],
    methods: &[MethodSpec],
    protocol: &Protocol,
    records: &[RunRecord],
    timings: &[RunTiming],
) -> (Vec<BenchmarkReport>, Vec<TimingReport>) {
    let mut reports = Vec::new();
    let mut timing_reports = Vec::new();
    for problem in problems {
        for &stop_mode in &protocol.stop_modes {
            let mut cells = Vec::new();
            for spec in methods {
                let cell: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.setup.problem == problem.name && r.setup.label == spec.label && r.setup.stop_mode == stop_mode)
                    .collect();
                let mut report = aggregate(&cell, problem.truth.optimal_value, protocol);
                report.problem.clone_from(&problem.name);
                report.label.clone_from(&spec.label);
                report.method = spec.method;
                report.stop_mode = stop_mode;
                cells.push(report);
                let times: Vec<&RunTiming> = timings
                    .iter()
                    .filter(|t| t.problem == problem.name && t.label == spec.label && t.stop_mode == stop_mode)
                    .collect();
                timing_reports.push(TimingReport {
                    problem: problem.name.clone(),
                    label: spec.label.clone(),
                    stop_mode,
                    timed_runs: times.len(),
                    mean_walltime_s: order_free_mean(times.iter().map(|t| t.walltime_s)),
                    mean_walltime_to_convergence_s: order_free_mean(times.iter().filter_map(|t| t.walltime_to_convergence_s)),
                });
            }
            reports.push(BenchmarkReport { schema_version: SCHEMA_VERSION, problem: problem.descriptor(), stop_mode, methods: cells });
        }
    }
    (reports, timing_reports)
}

/// One row of `runs.csv`.
#[derive(Debug, serde::Serialize)]
struct RunRow<'a> {
    schema_version: u32,
    problem: &'a str,
    label: &'a str,
    method: &'static str,
    stop_mode: String,
    restart: usize,
    iterations: usize,
    converged: bool,
    iterations_to_convergence: Option<usize>,
    qcalls: u64,
    qcalls_to_convergence: Option<u64>,
    f0: f64,
    final_f: f64,
    best_f: f64,
    failed: bool,
    lipschitz: Option<f64>,
    modal_bitstring: &'a str,
    hamming_distance: usize,
}

/// One row of `report.csv`.
#[derive(Debug, serde::Serialize)]
struct ReportRow<'a> {
    schema_version: u32,
    problem: &'a str,
    label: &'a str,
    method: &'static str,
    stop_mode: String,
    runs: usize,
    failed_runs: usize,
    converged_runs: usize,
    convergence_ratio: f64,
    mean_final_f: Option<f64>,
    mean_best_f: Option<f64>,
    mean_iterations: Option<f64>,
    mean_qcalls: Option<f64>,
    mean_qcalls_per_iteration: Option<f64>,
    mean_iterations_to_convergence: Option<f64>,
    mean_qcalls_to_convergence: Option<f64>,
    mean_qcalls_per_iteration_to_convergence: Option<f64>,
    mean_hamming_distance: Option<f64>,
    lipschitz_average: Option<f64>,
    lipschitz_std: Option<f64>,
    lipschitz_median: Option<f64>,
    lipschitz_iqr: Option<f64>,
    lipschitz_samples: Option<usize>,
}

/// File names written by [`write_outputs`].
pub const OUTPUT_FILES: [&str; 6] = ["runs.jsonl", "runs.csv", "report.jsonl", "report.csv", "timing.jsonl", "timing_report.jsonl"];

fn jsonl<T: serde::Serialize>(kind: &str, items: impl IntoIterator<Item = T>) -> Result<String, BenchError> {
    let mut out = serde_json::json!({ "schema_version": SCHEMA_VERSION, "kind": kind }).to_string();
    out.push('\n');
    for item in items {
        out.push_str(&serde_json::to_string(&item).map_err(|e| BenchError::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn csv_text<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| BenchError::Format(e.to_string()))
}

/// Deterministic text of `runs.jsonl`, `runs.csv`, `report.jsonl` and `report.csv`.
pub fn deterministic_files(output: &BenchmarkOutput) -> Result<Vec<(&'static str, String)>, BenchError> {
    let run_rows = output.records.iter().map(|r| RunRow {
        schema_version: SCHEMA_VERSION,
        problem: &r.setup.problem,
        label: &r.setup.label,
        method: r.setup.method.id(),
        stop_mode: r.setup.stop_mode.label(),
        restart: r.setup.restart,
        iterations: r.iterations(),
        converged: r.converged,
        iterations_to_convergence: r.iterations_to_convergence,
        qcalls: r.total_qcalls,
        qcalls_to_convergence: r.qcalls_to_convergence,
        f0: r.f0,
        final_f: r.final_f,
        best_f: r.best_f,
        failed: r.failed(),
        lipschitz: r.lipschitz(),
        modal_bitstring: &r.hamming.modal_bitstring,
        hamming_distance: r.hamming.distance,
    });
    let report_rows = output.method_reports().map(|m| ReportRow {
        schema_version: SCHEMA_VERSION,
        problem: &m.problem,
        label: &m.label,
        method: m.method.id(),
        stop_mode: m.stop_mode.label(),
        runs: m.runs,
        failed_runs: m.failed_runs,
        converged_runs: m.converged_runs,
        convergence_ratio: m.convergence_ratio,
        mean_final_f: m.mean_final_f,
        mean_best_f: m.mean_best_f,
        mean_iterations: m.mean_iterations,
        mean_qcalls: m.mean_qcalls,
        mean_qcalls_per_iteration: m.mean_qcalls_per_iteration,
        mean_iterations_to_convergence: m.mean_iterations_to_convergence,
        mean_qcalls_to_convergence: m.mean_qcalls_to_convergence,
        mean_qcalls_per_iteration_to_convergence: m.mean_qcalls_per_iteration_to_convergence,
        mean_hamming_distance: m.mean_hamming_distance,
        lipschitz_average: m.lipschitz.map(|l| l.average),
        lipschitz_std: m.lipschitz.map(|l| l.std),
        lipschitz_median: m.lipschitz.map(|l| l.median),
        lipschitz_iqr: m.lipschitz.map(|l| l.iqr),
        lipschitz_samples: m.lipschitz.map(|l| l.samples),
    });
    Ok(vec![
        ("runs.jsonl", jsonl("runs", &output.records)?),
        ("runs.csv", csv_text(run_rows)?),
        ("report.jsonl", jsonl("report", &output.reports)?),
        ("report.csv", csv_text(report_rows)?),
    ])
}

/// Writes all output files into `dir`.
pub fn write_outputs(dir: &Path, output: &BenchmarkOutput) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = deterministic_files(output)?;
    files.push(("timing.jsonl", jsonl("timing", &output.timings)?));
    files.push(("timing_report.jsonl", jsonl("timing_report", &output.timing_reports)?));
    for (name, text) in files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))?;
    }
    Ok(())
}
