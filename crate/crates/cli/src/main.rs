//! `qnbench`: generate MaxCut instances, run optimizers, sweep benchmarks,
//! tune hyperparameters and scan landscapes.
//!
//! Exit codes: 0 success, 1 I/O error, 2 usage or configuration error,
//! 3 numerical failure, 4 insufficient data.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Shots, StopName};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qnbench", version, about = "Benchmark preconditioned optimizers on QAOA MaxCut")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded random weighted graph.
    Generate(GenerateArgs),
    /// Run one optimizer from one starting point.
    Run(RunArgs),
    /// Run a benchmark sweep described by a config file (resumable).
    Bench(BenchArgs),
    /// Bayesian tuning of one optimizer's hyperparameters (resumable).
    Tune(TuneArgs),
    /// Scan the objective on a random two-dimensional plane.
    Scan(ScanArgs),
}

fn parse_weights(s: &str) -> Result<[f64; 2], String> {
    let (low, high) = s.split_once(',').ok_or_else(|| format!("expected `low,high`, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok([parse(low)?, parse(high)?])
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub vertices: usize,
    #[arg(long)]
    pub seed: u64,
    /// Edge probability in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    /// Uniform weight range `low,high`.
    #[arg(long, default_value = "1,1", value_parser = parse_weights)]
    pub weights: [f64; 2],
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by `run` and `tune` that fix the evaluation protocol.
#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Graph file as written by `generate`.
    #[arg(long)]
    pub problem: PathBuf,
    /// Problem name used in output files (default: the file stem).
    #[arg(long)]
    pub name: Option<String>,
    /// Method id.
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// QAOA depth p.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// `exact` or a shot count.
    #[arg(long, default_value = "exact")]
    pub shots: Shots,
    /// Run until the iteration cap, or also stop within ρ of the optimum.
    #[arg(long, value_enum, default_value = "max-iter")]
    pub stop: StopName,
    #[arg(long, default_value_t = 0.03)]
    pub rho: f64,
    /// TOML file of method options (line search, regularization, floors).
    #[arg(long)]
    pub options: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Hyperparameter file (TOML, or JSON with a `.json` extension); defaults otherwise.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub restart: usize,
    /// Iteration cap (default: the method family's cap).
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 512)]
    pub hamming_shots: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub shots: Option<Shots>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Number of Bayesian sweeps (trials).
    #[arg(long)]
    pub budget: usize,
    /// Optimizer runs averaged per trial.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 60)]
    pub max_iter: usize,
    /// Comma-separated hyperparameters to tune (default: all tuned ones).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<String>>,
    /// TOML file of tuner options.
    #[arg(long)]
    pub tuner: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Comma-separated center θ = (γ₁…γ_p, β₁…β_p).
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    /// Points per axis.
    #[arg(long, default_value_t = 300)]
    pub grid: usize,
    /// Offsets span [−range, range] along each direction.
    #[arg(long, default_value_t = 1.0)]
    pub range: f64,
    #[arg(long, default_value_t = 0)]
    pub direction_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_workers(workers: Option<usize>) -> Result<(), CliError> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_workers(cli.workers)?;
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Scan(a) => commands::scan(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
