//! Preconditioned optimizers benchmarked on shallow QAOA MaxCut.
//!
//! The crate is organized bottom-up:
//!
//! - [`problems`]: seeded weighted MaxCut instances and their brute-force ground truth.
//! - [`qaoa_sim`]: an exact statevector simulator for the depth-`p` QAOA ansatz with
//!   shot sampling, parameter-shift gradients and Fubini-Study metric evaluation.
//! - [`optimizers`]: quasi-Newton (BFGS, DFP, SR1, NCG, SP-BFGS), natural-gradient
//!   (QNG, qBroyden, qBang, m-QNG) and stochastic (SPSA, 2SPSA, QNSPSA, RCD) methods
//!   consuming an abstract [`optimizers::Oracle`].
//! - [`tuner`]: Gaussian-process Bayesian optimization of hyperparameters.
//! - [`bench`]: convergence, Lipschitz and cost metrics, landscape scans and full
//!   benchmark sweeps.

pub mod bench;
pub mod optimizers;
pub mod problems;
pub mod qaoa_sim;
pub mod seed;
pub mod tuner;

pub use problems::{CutAssignment, GroundTruth, WeightedGraph};
pub use qaoa_sim::{AnsatzConfig, Evaluator, ParameterVector, ShotMode};
