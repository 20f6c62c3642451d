//! Command errors and their process exit codes.

use std::path::{Path, PathBuf};

use qnbench::bench::BenchError;
use qnbench::optimizers::HyperError;
use qnbench::problems::ProblemError;
use qnbench::qaoa_sim::SimError;
use qnbench::tuner::TunerError;

/// Exit codes: 0 success, 1 I/O, 2 usage or configuration, 3 numerical failure,
/// 4 insufficient data.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    InsufficientData(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::InsufficientData(_) => 4,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io { path, source } => CliError::Io { path, source },
            BenchError::InsufficientRuns { .. } => CliError::InsufficientData(e.to_string()),
            BenchError::Problem(_) | BenchError::Sim(_) | BenchError::Format(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<TunerError> for CliError {
    fn from(e: TunerError) -> Self {
        match e {
            TunerError::Cholesky => CliError::Numeric(e.to_string()),
            TunerError::Io(source) => CliError::Io { path: PathBuf::from("trial log"), source },
            TunerError::Space(_) | TunerError::Budget { .. } | TunerError::ReplayMismatch(_) | TunerError::Log(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HyperError> for CliError {
    fn from(e: HyperError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}
