//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use qnbench::bench::{
    landscape_scan, random_directions, run_benchmark, write_outputs, BenchmarkOutput, MethodReport, Problem,
    Protocol, RecordStore, RunSeeds, RunSetup, OUTPUT_FILES, SCHEMA_VERSION,
};
use qnbench::optimizers::{Hyper, Method, MethodOptions, Tolerance};
use qnbench::problems::generate_problem;
use qnbench::tuner::{tune as tune_method, SearchSpace, TrialLog, TuneConfig, TunerOptions};
use qnbench::{AnsatzConfig, Evaluator, ShotMode};
use serde::Serialize;

use crate::config::{
    check_name, hyper_or_defaults, parse_method, read_graph, read_method_options, read_tuner_options,
    ExperimentConfig, Shots, StopName,
};
use crate::error::CliError;
use crate::output::OutputDir;
use crate::{BenchArgs, EvalArgs, GenerateArgs, RunArgs, ScanArgs, TuneArgs};

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(CliError::io(p))
}

fn json_text<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError::Config(e.to_string()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let [low, high] = a.weights;
    let graph = generate_problem(a.vertices, a.seed, a.density, (low, high))?;
    let text = graph.to_text();
    match &a.out {
        Some(path) => fs::write(path, text).map_err(CliError::io(path)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A problem read from a graph file, named after the file stem unless overridden.
fn load_problem(path: &Path, name: Option<&str>) -> Result<Problem, CliError> {
    let graph = read_graph(path)?;
    let name = match name {
        Some(n) => n.to_string(),
        None => path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem").to_string(),
    };
    check_name("problem", &name)?;
    Ok(Problem::new(name, graph)?)
}

fn check_eval(e: &EvalArgs) -> Result<(), CliError> {
    if e.layers == 0 {
        return Err(CliError::Config("--layers must be positive".into()));
    }
    if !(e.rho.is_finite() && e.rho >= 0.0) {
        return Err(CliError::Config(format!("--rho must be a finite non-negative number, got {}", e.rho)));
    }
    Ok(())
}

/// Effective settings of a `run`, echoed as `config.toml`.
#[derive(Debug, Serialize)]
struct RunEcho {
    problem_file: PathBuf,
    name: String,
    method: String,
    seed: u64,
    restart: usize,
    layers: usize,
    shots: Shots,
    stop: StopName,
    rho: f64,
    max_iterations: usize,
    hamming_shots: usize,
    hyper: BTreeMap<String, f64>,
    options: MethodOptions,
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let e = &a.eval;
    check_eval(e)?;
    if a.hamming_shots == 0 {
        return Err(CliError::Config("--hamming-shots must be positive".into()));
    }
    let method = parse_method(&e.method)?;
    let hyper = hyper_or_defaults(method, a.hyper.as_deref())?;
    let options = read_method_options(e.options.as_deref())?;
    let problem = load_problem(&e.problem, e.name.as_deref())?;
    let max_iterations = a.max_iter.unwrap_or_else(|| Protocol::default().cap(method));
    let setup = RunSetup {
        problem: problem.name.clone(),
        label: method.id().into(),
        method,
        hyper: hyper.clone(),
        stop_mode: e.stop.mode(e.rho),
        restart: a.restart,
        max_iterations,
        layers: e.layers,
        shot_mode: e.shots.0,
        options: options.clone(),
        convergence_rho: e.rho,
        hamming_shots: a.hamming_shots,
        seeds: RunSeeds::derive(e.seed, &problem.name, method, a.restart),
    };
    let (record, timing) = qnbench::bench::run_single(&problem, &setup)?;

    let mut out = OutputDir::create(&a.out)?;
    out.write_json("record.json", &record)?;
    out.write("timing.json", &json_text(&timing)?, false)?;
    out.write_toml(
        "config.toml",
        &RunEcho {
            problem_file: absolute(&e.problem)?,
            name: problem.name.clone(),
            method: method.id().into(),
            seed: e.seed,
            restart: a.restart,
            layers: e.layers,
            shots: e.shots,
            stop: e.stop,
            rho: e.rho,
            max_iterations,
            hamming_shots: a.hamming_shots,
            hyper: hyper.as_map().clone(),
            options,
        },
    )?;
    let dir = out.finish("run", Some(e.seed))?;

    println!("problem      {} (n={}, optimum {})", problem.name, problem.graph.n_vertices(), problem.truth.optimal_value);
    println!("method       {}", method.id());
    println!("stop         {:?}", record.stop);
    println!("iterations   {}", record.iterations());
    println!("qcalls       {}", record.total_qcalls);
    println!("f0           {}", record.f0);
    println!("final f      {}", record.final_f);
    println!("best f       {}", record.best_f);
    println!("converged    {}", match record.iterations_to_convergence {
        Some(k) => format!("yes (iteration {k}, {} qcalls)", record.qcalls_to_convergence.unwrap_or(0)),
        None => "no".into(),
    });
    println!("modal cut    {} (distance {})", record.hamming.modal_bitstring, record.hamming.distance);
    println!("output       {}", dir.display());
    if record.failed() {
        return Err(CliError::Numeric(format!("run failed: {:?}", record.stop)));
    }
    Ok(())
}

fn summary_table(output: &BenchmarkOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<12} {:<14} {:>5} {:>7} {:>14} {:>12} {:>12}",
        "problem", "stop", "label", "runs", "conv", "mean best f", "mean qcalls", "mean L"
    );
    for m in output.method_reports() {
        let MethodReport { problem, label, stop_mode, runs, convergence_ratio, mean_best_f, mean_qcalls, lipschitz, .. } = m;
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:<14} {:>5} {:>7.3} {:>14} {:>12} {:>12}",
            problem,
            stop_mode.label(),
            label,
            runs,
            convergence_ratio,
            fmt_opt(*mean_best_f),
            fmt_opt(*mean_qcalls),
            fmt_opt(lipschitz.map(|l| l.average)),
        );
    }
    s
}

pub fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(r) = a.restarts {
        cfg.protocol.restarts = r;
    }
    if let Some(s) = a.shots {
        cfg.protocol.shots = s;
    }
    if let Some(m) = a.max_iter {
        cfg.protocol.max_iterations = Some(m);
    }
    let config_path = absolute(&a.config)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mut exp = cfg.resolve(base)?;
    if exp.methods.is_empty() {
        eprintln!("warning: {} lists no methods; nothing to run", a.config.display());
        return Ok(());
    }
    let out_dir = match (&a.out, &exp.effective.output) {
        (Some(o), _) => absolute(o)?,
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(CliError::Config("no output directory: set `output` in the config or pass --out".into())),
    };
    exp.effective.output = Some(out_dir.clone());

    let mut out = OutputDir::create(&out_dir)?;
    let store = RecordStore::new(&out_dir);
    let result = run_benchmark(&exp.problems, &exp.methods, &exp.protocol, exp.effective.seed, Some(&store))?;
    write_outputs(&out_dir, &result)?;
    for name in OUTPUT_FILES {
        out.record_existing(name, !name.starts_with("timing"))?;
    }
    out.write_toml("config.toml", &exp.effective)?;
    out.finish("bench", Some(exp.effective.seed))?;

    print!("{}", summary_table(&result));
    println!(
        "{} runs ({} reused from {}), output in {}",
        result.records.len(),
        result.reused_runs,
        out_dir.join("records").display(),
        out_dir.display()
    );
    Ok(())
}

/// Effective settings of a `tune`; a resumed session must match it exactly.
#[derive(Debug, Serialize)]
struct TuneEcho {
    problem_file: PathBuf,
    name: String,
    method: String,
    seed: u64,
    budget: usize,
    restarts: usize,
    layers: usize,
    shots: Shots,
    stop: StopName,
    rho: f64,
    max_iterations: usize,
    dimensions: Vec<String>,
    options: MethodOptions,
    tuner: TunerOptions,
}

/// Human-readable defaults block: every hyperparameter with its search space,
/// default, and tuned value (or `fixed` when it was not searched).
fn defaults_block(method: Method, space: &SearchSpace, best: &Hyper) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:<22} {:<7} {:>12} {:>14}", "parameter", "search space", "scale", "default", "tuned");
    for p in method.schema() {
        let tuned = if space.dims().iter().any(|d| d.name == p.name) {
            format!("{:.6e}", best.get(p.name))
        } else {
            "fixed".into()
        };
        let scale = match p.scale {
            qnbench::optimizers::Scale::Linear => "linear",
            qnbench::optimizers::Scale::Log => "log",
        };
        let _ = writeln!(
            s,
            "{:<10} {:<22} {:<7} {:>12} {:>14}",
            p.name,
            format!("[{}, {}]", p.low, p.high),
            scale,
            p.default,
            tuned
        );
    }
    s
}

pub fn tune(a: &TuneArgs) -> Result<(), CliError> {
    let e = &a.eval;
    check_eval(e)?;
    if a.restarts == 0 {
        return Err(CliError::Config("--restarts must be positive".into()));
    }
    let method = parse_method(&e.method)?;
    let options = read_method_options(e.options.as_deref())?;
    let tuner_options = read_tuner_options(a.tuner.as_deref())?;
    if a.budget < tuner_options.n_init {
        return Err(CliError::Config(format!(
            "budget {} is smaller than the {} initial random trials (n_init)",
            a.budget, tuner_options.n_init
        )));
    }
    let problem = load_problem(&e.problem, e.name.as_deref())?;
    let mut space = SearchSpace::for_method(method)?;
    if let Some(dims) = &a.dims {
        let names: Vec<&str> = dims.iter().map(String::as_str).collect();
        space = space.subset(&names)?;
    }
    let tolerance = match e.stop {
        StopName::MaxIter => Tolerance::None,
        StopName::Tol => Tolerance::Relative { rho: e.rho, optimum: problem.truth.optimal_value },
    };
    let cfg = TuneConfig {
        budget: a.budget,
        restarts: a.restarts,
        layers: e.layers,
        shot_mode: e.shots.0,
        max_iterations: a.max_iter,
        tolerance,
        method_options: options.clone(),
        tuner: tuner_options.clone(),
        dimensions: Some(space.dims().iter().map(|d| d.name.clone()).collect()),
        seed: e.seed,
    };
    let echo = TuneEcho {
        problem_file: absolute(&e.problem)?,
        name: problem.name.clone(),
        method: method.id().into(),
        seed: e.seed,
        budget: a.budget,
        restarts: a.restarts,
        layers: e.layers,
        shots: e.shots,
        stop: e.stop,
        rho: e.rho,
        max_iterations: a.max_iter,
        dimensions: cfg.dimensions.clone().unwrap_or_default(),
        options,
        tuner: tuner_options,
    };

    let mut out = OutputDir::create(&a.out)?;
    let config_text = toml::to_string(&echo).map_err(|err| CliError::Config(err.to_string()))?;
    let config_path = a.out.join("config.toml");
    let log_path = a.out.join("trials.jsonl");
    let mut resume = TrialLog::default();
    if log_path.exists() {
        if config_path.exists() {
            let previous = fs::read_to_string(&config_path).map_err(CliError::io(&config_path))?;
            if previous != config_text {
                return Err(CliError::Config(format!(
                    "{} holds a tuning session with different settings; use a fresh output directory",
                    a.out.display()
                )));
            }
        }
        let file = fs::File::open(&log_path).map_err(CliError::io(&log_path))?;
        resume = TrialLog::read_jsonl(BufReader::new(file))?;
    }
    out.write("config.toml", &config_text, true)?;
    let mut log_file = fs::OpenOptions::new().create(true).append(true).open(&log_path).map_err(CliError::io(&log_path))?;

    let outcome = tune_method(method, &problem.graph, &cfg, &resume.trials, |t| TrialLog::write_trial(&mut log_file, t))?;
    out.record_existing("trials.jsonl", true)?;
    let Some(best_trial) = outcome.log.incumbent() else {
        out.finish("tune", Some(e.seed))?;
        return Err(CliError::InsufficientData(format!("all {} trials failed; no incumbent", outcome.log.trials.len())));
    };

    out.write_toml("best_hyper.toml", outcome.best.as_map())?;
    let failed = outcome.log.trials.iter().filter(|t| t.failed).count();
    let mut summary = String::new();
    let _ = writeln!(summary, "schema_version {SCHEMA_VERSION}");
    let _ = writeln!(summary, "method         {}", method.id());
    let _ = writeln!(
        summary,
        "problem        {} (n={}, optimum {})",
        problem.name,
        problem.graph.n_vertices(),
        problem.truth.optimal_value
    );
    let _ = writeln!(
        summary,
        "protocol       {} restarts, p={}, shots {}, max {} iterations, stop {}",
        a.restarts,
        e.layers,
        e.shots,
        a.max_iter,
        e.stop.mode(e.rho).label()
    );
    let _ = writeln!(summary, "trials         {} ({} replayed, {} failed)", outcome.log.trials.len(), resume.trials.len(), failed);
    let _ = writeln!(summary, "best trial     {} (mean final f {})", best_trial.iteration, outcome.best_value);
    let _ = writeln!(summary, "qcalls         {}", outcome.log.trials.last().map_or(0, |t| t.cost_qcalls));
    let _ = writeln!(summary);
    summary.push_str(&defaults_block(method, &space, &outcome.best));
    out.write("summary.txt", &summary, true)?;
    out.finish("tune", Some(e.seed))?;
    print!("{summary}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct ScanMeta {
    schema_version: u32,
    problem_file: PathBuf,
    layers: usize,
    center: Vec<f64>,
    direction_seed: u64,
    d1: Vec<f64>,
    d2: Vec<f64>,
    grid: usize,
    range: f64,
    /// Offsets along `d1` (rows of `landscape.txt`).
    a: Vec<f64>,
    /// Offsets along `d2` (columns).
    b: Vec<f64>,
    /// SHA-256 of `landscape.txt`.
    checksum: String,
    min: f64,
    max: f64,
}

pub fn scan(a: &ScanArgs) -> Result<(), CliError> {
    if a.theta.is_empty() || !a.theta.len().is_multiple_of(2) {
        return Err(CliError::Config(format!("--theta needs 2p values (γ₁…γ_p, β₁…β_p), got {}", a.theta.len())));
    }
    if a.theta.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Config("--theta values must be finite".into()));
    }
    if a.grid == 0 {
        return Err(CliError::Config("--grid must be positive".into()));
    }
    if !(a.range.is_finite() && a.range > 0.0) {
        return Err(CliError::Config(format!("--range must be positive, got {}", a.range)));
    }
    let graph = read_graph(&a.problem)?;
    let layers = a.theta.len() / 2;
    let config = AnsatzConfig::new(graph.n_vertices(), layers, ShotMode::Exact)?;
    let eval = Evaluator::new(graph, config, 0)?;
    let (d1, d2) = random_directions(a.theta.len(), a.direction_seed);
    let grid = landscape_scan(&eval, &a.theta, &d1, &d2, a.grid, a.range);
    let values = grid.values.iter().flatten();
    let min = values.clone().copied().fold(f64::INFINITY, f64::min);
    let max = values.copied().fold(f64::NEG_INFINITY, f64::max);

    let mut out = OutputDir::create(&a.out)?;
    out.write("landscape.txt", &grid.to_text(), true)?;
    let meta = ScanMeta {
        schema_version: SCHEMA_VERSION,
        problem_file: absolute(&a.problem)?,
        layers,
        center: a.theta.clone(),
        direction_seed: a.direction_seed,
        d1,
        d2,
        grid: a.grid,
        range: a.range,
        checksum: grid.checksum(),
        a: grid.a,
        b: grid.b,
        min,
        max,
    };
    out.write_json("landscape.json", &meta)?;
    let dir = out.finish("scan", None)?;
    println!("{}x{} grid, f in [{min}, {max}], checksum {}", a.grid, a.grid, meta.checksum);
    println!("output {}", dir.display());
    Ok(())
}
