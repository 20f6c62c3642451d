//! Exact statevector simulation of the depth-`p` QAOA ansatz
//!
//! `|γ, β⟩ = U_B(β_p) U_P(γ_p) … U_B(β_1) U_P(γ_1) |+⟩^⊗n` with
//! `U_P(γ) = exp(−iγ P)`, `P` the cut-value diagonal, and
//! `U_B(β) = Π_q exp(−iβ X_q)` (the mixer angle is not halved).
//!
//! Parameters are always flattened as `(γ_1, …, γ_p, β_1, …, β_p)`.
//!
//! # Cost model (qCalls)
//!
//! | evaluation                    | qCalls                         |
//! |-------------------------------|--------------------------------|
//! | expectation                   | 1                              |
//! | bitstring sample              | 1                              |
//! | fidelity                      | 1                              |
//! | gradient                      | `2·p·(|E| + n)`                |
//! | partial derivative `∂/∂γ_k`   | `2·|E|`                        |
//! | partial derivative `∂/∂β_k`   | `2·n`                          |
//! | metric, full                  | `2p(2p+1)/2`                   |
//! | metric, block diagonal        | `3p`                           |
//! | metric, diagonal              | `2p`                           |
//!
//! Gradients use the parameter-shift rule on each elementary gate: every edge gate
//! `exp(−iφ(Z_uZ_v − I)/2)` with `φ = γ_k w_uv` and every mixer gate
//! `exp(−iψ X_q / 2)` with `ψ = 2β_k` is shifted by `±π/2` separately and the
//! chain rule collects `∂f/∂γ_k = Σ_e w_e ∂f/∂φ_e`, `∂f/∂β_k = 2 Σ_q ∂f/∂ψ_q`.
//! A single shift of the shared angle is not exact here because the layer
//! generators have more than one eigenvalue gap.

mod state;

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;

use crate::optimizers::{MetricApprox, Oracle, OracleError};
use crate::problems::{CutAssignment, WeightedGraph};
use crate::seed::Rng64;

pub use state::{CostDiagonal, StateVector, C64};
use state::{apply_diagonal_phase, apply_edge_phase, apply_mixer, apply_x_rotation, apply_x_sum};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("ansatz has {ansatz} qubits but the graph has {graph} vertices")]
    DimensionMismatch { ansatz: usize, graph: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParameterLength { expected: usize, got: usize },
    #[error("layer count must be positive")]
    ZeroLayers,
    #[error("sampled mode needs at least one shot")]
    ZeroShots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotMode {
    Exact,
    Sampled { shots: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnsatzConfig {
    pub n_qubits: usize,
    pub p: usize,
    pub shot_mode: ShotMode,
}

impl AnsatzConfig {
    pub fn new(n_qubits: usize, p: usize, shot_mode: ShotMode) -> Result<Self, SimError> {
        if p == 0 {
            return Err(SimError::ZeroLayers);
        }
        if shot_mode == (ShotMode::Sampled { shots: 0 }) {
            return Err(SimError::ZeroShots);
        }
        Ok(Self { n_qubits, p, shot_mode })
    }

    pub fn n_params(&self) -> usize {
        2 * self.p
    }
}

/// The `2p` QAOA angles in `(γ…, β…)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(gammas: &[f64], betas: &[f64]) -> Self {
        assert_eq!(gammas.len(), betas.len(), "one gamma and one beta per layer");
        Self { values: gammas.iter().chain(betas).copied().collect() }
    }

    pub fn from_flat(values: Vec<f64>) -> Result<Self, SimError> {
        if values.is_empty() || !values.len().is_multiple_of(2) {
            return Err(SimError::ParameterLength { expected: 2 * values.len().div_ceil(2).max(1), got: values.len() });
        }
        Ok(Self { values })
    }

    pub fn zeros(p: usize) -> Self {
        Self { values: vec![0.0; 2 * p] }
    }

    pub fn layers(&self) -> usize {
        self.values.len() / 2
    }

    pub fn gammas(&self) -> &[f64] {
        &self.values[..self.layers()]
    }

    pub fn betas(&self) -> &[f64] {
        &self.values[self.layers()..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// One elementary gate displaced from its nominal angle.
#[derive(Debug, Clone, Copy)]
enum GateShift {
    Edge { layer: usize, edge: usize, delta: f64 },
    Mixer { layer: usize, qubit: usize, delta: f64 },
}

/// Statevector of the ansatz at `theta`.
pub fn prepare_state(
    graph: &WeightedGraph,
    cfg: &AnsatzConfig,
    theta: &ParameterVector,
) -> Result<StateVector, SimError> {
    check_dims(graph, cfg, theta.as_slice())?;
    let diag = CostDiagonal::new(graph);
    Ok(simulate(graph, diag.energies(), theta.as_slice(), None))
}

fn check_dims(graph: &WeightedGraph, cfg: &AnsatzConfig, theta: &[f64]) -> Result<(), SimError> {
    if cfg.n_qubits != graph.n_vertices() {
        return Err(SimError::DimensionMismatch { ansatz: cfg.n_qubits, graph: graph.n_vertices() });
    }
    if theta.len() != cfg.n_params() {
        return Err(SimError::ParameterLength { expected: cfg.n_params(), got: theta.len() });
    }
    Ok(())
}

fn simulate(graph: &WeightedGraph, diag: &[f64], theta: &[f64], shift: Option<GateShift>) -> StateVector {
    let n = graph.n_vertices();
    let p = theta.len() / 2;
    let mut psi = StateVector::uniform(n);
    let amps = &mut psi.amplitudes;
    for k in 0..p {
        apply_diagonal_phase(amps, diag, theta[k]);
        if let Some(GateShift::Edge { layer, edge, delta }) = shift {
            if layer == k {
                let e = graph.edges()[edge];
                apply_edge_phase(amps, e.u, e.v, delta);
            }
        }
        apply_mixer(amps, n, theta[p + k]);
        if let Some(GateShift::Mixer { layer, qubit, delta }) = shift {
            if layer == k {
                // exp(−iδX/2) commutes with the rest of the qubit's mixer gate
                apply_x_rotation(amps, qubit, delta / 2.0);
            }
        }
    }
    psi
}

/// `Re{⟨∂_iψ|∂_jψ⟩ − ⟨∂_iψ|ψ⟩⟨ψ|∂_jψ⟩}` from a state and its parameter derivatives.
pub fn fubini_study_metric(psi: &StateVector, derivatives: &[StateVector]) -> DMatrix<f64> {
    let m = derivatives.len();
    let overlaps: Vec<C64> = derivatives.iter().map(|d| psi.inner(d)).collect();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = (derivatives[i].inner(&derivatives[j]) - overlaps[i].conj() * overlaps[j]).re;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Exact derivative states `∂ψ/∂θ_j` by inserting `−i·G` after each layer gate.
fn derivative_states(graph: &WeightedGraph, diag: &[f64], theta: &[f64]) -> (StateVector, Vec<StateVector>) {
    let n = graph.n_vertices();
    let p = theta.len() / 2;
    let minus_i = C64::new(0.0, -1.0);
    let mut derivs: Vec<Option<StateVector>> = vec![None; 2 * p];
    let mut psi = StateVector::uniform(n);
    for k in 0..p {
        // derivatives that already exist ride along with the remaining gates
        apply_diagonal_phase(&mut psi.amplitudes, diag, theta[k]);
        for d in derivs.iter_mut().flatten() {
            apply_diagonal_phase(&mut d.amplitudes, diag, theta[k]);
        }
        let dg: Vec<C64> = psi.amplitudes.iter().zip(diag).map(|(a, &e)| minus_i * e * a).collect();
        derivs[k] = Some(StateVector::from_amplitudes(dg));

        apply_mixer(&mut psi.amplitudes, n, theta[p + k]);
        for d in derivs.iter_mut().flatten() {
            apply_mixer(&mut d.amplitudes, n, theta[p + k]);
        }
        let db: Vec<C64> = apply_x_sum(&psi.amplitudes, n).into_iter().map(|a| minus_i * a).collect();
        derivs[p + k] = Some(StateVector::from_amplitudes(db));
    }
    (psi, derivs.into_iter().map(|d| d.expect("every parameter visited")).collect())
}

/// Draws `shots` basis states from `|amplitude|²`.
pub fn sample_state<R: rand::Rng + ?Sized>(psi: &StateVector, shots: usize, rng: &mut R) -> Vec<CutAssignment> {
    let dist = WeightedIndex::new(psi.probabilities()).expect("normalized state");
    let n = psi.n_qubits();
    (0..shots).map(|_| CutAssignment::from_index(dist.sample(rng), n)).collect()
}

/// A 2p×2p Fubini-Study metric together with the approximation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    pub matrix: DMatrix<f64>,
    pub approximation: MetricApprox,
}

impl MetricTensor {
    /// The quantum Fisher information matrix `F = 4 g`.
    pub fn fisher(&self) -> DMatrix<f64> {
        &self.matrix * 4.0
    }
}

/// Restricts a full metric to the requested approximation.
pub fn restrict_metric(full: &DMatrix<f64>, approx: MetricApprox) -> DMatrix<f64> {
    let m = full.nrows();
    let p = m / 2;
    let layer = |i: usize| i % p.max(1);
    DMatrix::from_fn(m, m, |i, j| {
        let keep = match approx {
            MetricApprox::Full => true,
            MetricApprox::BlockDiagonal => layer(i) == layer(j),
            MetricApprox::Diagonal => i == j,
        };
        if keep {
            full[(i, j)]
        } else {
            0.0
        }
    })
}

/// Objective, gradient and metric oracle over one QAOA instance.
///
/// Owns a call counter and a shot-noise stream; create one per optimizer run.
#[derive(Debug, Clone)]
pub struct Evaluator {
    graph: WeightedGraph,
    config: AnsatzConfig,
    diag: CostDiagonal,
    qcalls: u64,
    rng: Rng64,
}

impl Evaluator {
    pub fn new(graph: WeightedGraph, config: AnsatzConfig, shot_seed: u64) -> Result<Self, SimError> {
        if config.n_qubits != graph.n_vertices() {
            return Err(SimError::DimensionMismatch { ansatz: config.n_qubits, graph: graph.n_vertices() });
        }
        let diag = CostDiagonal::new(&graph);
        Ok(Self { graph, config, diag, qcalls: 0, rng: Rng64::seed_from_u64(shot_seed) })
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn config(&self) -> &AnsatzConfig {
        &self.config
    }

    pub fn cost_diagonal(&self) -> &CostDiagonal {
        &self.diag
    }

    pub fn qcalls(&self) -> u64 {
        self.qcalls
    }

    pub fn state(&self, theta: &[f64]) -> StateVector {
        self.check(theta);
        simulate(&self.graph, self.diag.energies(), theta, None)
    }

    fn check(&self, theta: &[f64]) {
        assert_eq!(theta.len(), self.config.n_params(), "parameter vector length");
    }

    /// Noise-free expectation; does not count as a circuit execution.
    pub fn exact_expectation(&self, theta: &[f64]) -> f64 {
        self.state(theta).diagonal_expectation(self.diag.energies())
    }

    fn measure(&mut self, psi: &StateVector) -> f64 {
        self.qcalls += 1;
        match self.config.shot_mode {
            ShotMode::Exact => psi.diagonal_expectation(self.diag.energies()),
            ShotMode::Sampled { shots } => {
                let dist = WeightedIndex::new(psi.probabilities()).expect("normalized state");
                let e = self.diag.energies();
                let total: f64 = (0..shots).map(|_| e[dist.sample(&mut self.rng)]).sum();
                total / shots as f64
            }
        }
    }

    /// `⟨θ|P|θ⟩`, exact or estimated from `shots` samples.
    pub fn expectation(&mut self, theta: &ParameterVector) -> f64 {
        self.expectation_flat(theta.as_slice())
    }

    pub fn expectation_flat(&mut self, theta: &[f64]) -> f64 {
        let psi = self.state(theta);
        self.measure(&psi)
    }

    fn shifted(&mut self, theta: &[f64], shift: GateShift) -> f64 {
        let psi = simulate(&self.graph, self.diag.energies(), theta, Some(shift));
        self.measure(&psi)
    }

    fn shift_pair(&mut self, theta: &[f64], make: impl Fn(f64) -> GateShift) -> f64 {
        0.5 * (self.shifted(theta, make(FRAC_PI_2)) - self.shifted(theta, make(-FRAC_PI_2)))
    }

    /// Parameter-shift derivative with respect to `θ_j`.
    pub fn partial_derivative(&mut self, theta: &[f64], j: usize) -> f64 {
        self.check(theta);
        let p = self.config.p;
        if j < p {
            let mut acc = 0.0;
            for (edge, e) in self.graph.edges().to_vec().into_iter().enumerate() {
                acc += e.w * self.shift_pair(theta, |delta| GateShift::Edge { layer: j, edge, delta });
            }
            acc
        } else {
            let layer = j - p;
            let mut acc = 0.0;
            for qubit in 0..self.config.n_qubits {
                acc += self.shift_pair(theta, |delta| GateShift::Mixer { layer, qubit, delta });
            }
            2.0 * acc
        }
    }

    /// Full parameter-shift gradient.
    pub fn gradient(&mut self, theta: &ParameterVector) -> Vec<f64> {
        self.gradient_flat(theta.as_slice())
    }

    pub fn gradient_flat(&mut self, theta: &[f64]) -> Vec<f64> {
        (0..theta.len()).map(|j| self.partial_derivative(theta, j)).collect()
    }

    /// Fubini-Study metric from exact derivative states.
    pub fn qfim(&mut self, theta: &ParameterVector, approx: MetricApprox) -> MetricTensor {
        self.qfim_flat(theta.as_slice(), approx)
    }

    pub fn qfim_flat(&mut self, theta: &[f64], approx: MetricApprox) -> MetricTensor {
        self.check(theta);
        let m = theta.len() as u64;
        let p = self.config.p as u64;
        self.qcalls += match approx {
            MetricApprox::Full => m * (m + 1) / 2,
            MetricApprox::BlockDiagonal => 3 * p,
            MetricApprox::Diagonal => m,
        };
        let (psi, derivs) = derivative_states(&self.graph, self.diag.energies(), theta);
        let full = fubini_study_metric(&psi, &derivs);
        MetricTensor { matrix: restrict_metric(&full, approx), approximation: approx }
    }

    /// `|⟨ψ(a)|ψ(b)⟩|²`; one circuit execution.
    pub fn fidelity_flat(&mut self, a: &[f64], b: &[f64]) -> f64 {
        self.qcalls += 1;
        self.state(a).inner(&self.state(b)).norm_sqr()
    }

    /// `shots` basis states drawn from the Born distribution.
    pub fn sample_bitstrings(&mut self, theta: &ParameterVector, shots: usize) -> Vec<CutAssignment> {
        self.qcalls += 1;
        let psi = self.state(theta.as_slice());
        sample_state(&psi, shots, &mut self.rng)
    }
}

impl Oracle for Evaluator {
    fn dim(&self) -> usize {
        self.config.n_params()
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        self.expectation_flat(x)
    }

    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        self.gradient_flat(x)
    }

    fn partial(&mut self, x: &[f64], j: usize) -> f64 {
        self.partial_derivative(x, j)
    }

    fn metric(&mut self, x: &[f64], approx: MetricApprox) -> Result<DMatrix<f64>, OracleError> {
        Ok(self.qfim_flat(x, approx).matrix)
    }

    fn fidelity(&mut self, x: &[f64], y: &[f64]) -> Result<f64, OracleError> {
        Ok(self.fidelity_flat(x, y))
    }

    fn monitor(&mut self, x: &[f64]) -> f64 {
        self.exact_expectation(x)
    }

    fn qcalls(&self) -> u64 {
        self.qcalls
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{brute_force, generate_problem, Edge};
    use rand::Rng;

    fn k2() -> WeightedGraph {
        generate_problem(2, 0, 1.0, (1.0, 1.0)).unwrap()
    }

    fn fixture3() -> WeightedGraph {
        generate_problem(3, 32, 1.0, (1.0, 1.0)).unwrap()
    }

    fn heavy3() -> WeightedGraph {
        generate_problem(3, 32, 1.0, (10.0, 100.0)).unwrap()
    }

    fn exact(g: &WeightedGraph, p: usize) -> Evaluator {
        let cfg = AnsatzConfig::new(g.n_vertices(), p, ShotMode::Exact).unwrap();
        Evaluator::new(g.clone(), cfg, 1).unwrap()
    }

    #[test]
    fn zero_angles_give_uniform_state() {
        let g = fixture3();
        let cfg = AnsatzConfig::new(3, 2, ShotMode::Exact).unwrap();
        let psi = prepare_state(&g, &cfg, &ParameterVector::zeros(2)).unwrap();
        for a in psi.amplitudes() {
            assert!((a - C64::new(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn phase_only_layer_keeps_probabilities() {
        let g = k2();
        let cfg = AnsatzConfig::new(2, 1, ShotMode::Exact).unwrap();
        let gamma = 0.731;
        let psi = prepare_state(&g, &cfg, &ParameterVector::new(&[gamma], &[0.0])).unwrap();
        let diag = CostDiagonal::new(&g);
        for (a, &e) in psi.amplitudes().iter().zip(diag.energies()) {
            assert!((a - C64::from_polar(0.5, -gamma * e)).norm() < 1e-15);
        }
    }

    #[test]
    fn dimension_errors() {
        let g = k2();
        let cfg = AnsatzConfig::new(3, 1, ShotMode::Exact).unwrap();
        assert!(matches!(
            prepare_state(&g, &cfg, &ParameterVector::zeros(1)),
            Err(SimError::DimensionMismatch { .. })
        ));
        let cfg = AnsatzConfig::new(2, 2, ShotMode::Exact).unwrap();
        assert!(matches!(
            prepare_state(&g, &cfg, &ParameterVector::zeros(1)),
            Err(SimError::ParameterLength { .. })
        ));
        assert_eq!(AnsatzConfig::new(2, 0, ShotMode::Exact), Err(SimError::ZeroLayers));
        assert_eq!(AnsatzConfig::new(2, 1, ShotMode::Sampled { shots: 0 }), Err(SimError::ZeroShots));
    }

    #[test]
    fn cost_diagonal_matches_cut_values() {
        let g = generate_problem(5, 4, 0.7, (1.0, 3.0)).unwrap();
        let diag = CostDiagonal::new(&g);
        for (k, &e) in diag.energies().iter().enumerate() {
            let a = CutAssignment::from_index(k, 5);
            assert_eq!(e, crate::problems::cut_value(&g, &a).unwrap());
            assert!(e <= 0.0);
        }
    }

    #[test]
    fn uniform_expectation_is_half_weight() {
        let g = fixture3();
        let mut ev = exact(&g, 1);
        let f = ev.expectation(&ParameterVector::zeros(1));
        assert!((f + g.total_weight() / 2.0).abs() < 1e-12);
        assert_eq!(ev.qcalls(), 1);
    }

    #[test]
    fn sampled_expectation_within_binomial_bound() {
        let g = k2();
        let cfg = AnsatzConfig::new(2, 1, ShotMode::Sampled { shots: 512 }).unwrap();
        let mut ev = Evaluator::new(g, cfg, 99).unwrap();
        let f = ev.expectation(&ParameterVector::zeros(1));
        let sigma = 0.5 / 512f64.sqrt();
        assert!((f + 0.5).abs() < 5.0 * sigma, "{f}");
    }

    #[test]
    fn zero_weight_graph_has_zero_gradient() {
        let g = WeightedGraph::with_nonnegative_weights(3, vec![Edge { u: 0, v: 1, w: 0.0 }, Edge { u: 1, v: 2, w: 0.0 }]);
        let mut ev = exact(&g, 2);
        let grad = ev.gradient_flat(&[0.3, -1.2, 0.8, 2.0]);
        assert!(grad.iter().all(|&d| d.abs() < 1e-15), "{grad:?}");
    }

    #[test]
    fn gradient_matches_finite_differences_on_fixture() {
        let g = fixture3();
        let mut ev = exact(&g, 1);
        let mut rng = crate::seed::stream(5, &["fd"]);
        let h = 1e-5;
        for _ in 0..20 {
            let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let grad = ev.gradient_flat(&theta);
            for j in 0..2 {
                let mut xp = theta.clone();
                let mut xm = theta.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (ev.exact_expectation(&xp) - ev.exact_expectation(&xm)) / (2.0 * h);
                assert!((fd - grad[j]).abs() < 1e-6, "component {j}: {fd} vs {}", grad[j]);
            }
        }
    }

    #[test]
    fn gradient_matches_high_order_differences_on_heavy_weights() {
        let g = heavy3();
        let mut ev = exact(&g, 1);
        let mut rng = crate::seed::stream(5, &["fd"]);
        for _ in 0..10 {
            let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let grad = ev.gradient_flat(&theta);
            // weights up to 100 make third derivatives large, so the plain central
            // difference carries ~1e−5 truncation error; a fourth-order stencil does not
            let h = 1e-5;
            for j in 0..2 {
                let at = |t: f64| {
                    let mut x = theta.clone();
                    x[j] += t;
                    ev.exact_expectation(&x)
                };
                let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                assert!((fd - grad[j]).abs() < 1e-6, "component {j}: {fd} vs {}", grad[j]);
            }
        }
    }

    #[test]
    fn gradient_cost_is_documented() {
        let g = fixture3();
        let mut ev = exact(&g, 2);
        ev.gradient_flat(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(ev.qcalls(), 2 * 2 * (3 + 3));
        let before = ev.qcalls();
        ev.partial_derivative(&[0.1, 0.2, 0.3, 0.4], 3);
        assert_eq!(ev.qcalls() - before, 2 * 3);
    }

    #[test]
    fn metric_diagonal_and_block_are_restrictions() {
        let g = fixture3();
        let mut ev = exact(&g, 2);
        let theta = [0.4, -0.9, 0.25, 1.1];
        let full = ev.qfim_flat(&theta, MetricApprox::Full).matrix;
        let diag = ev.qfim_flat(&theta, MetricApprox::Diagonal).matrix;
        let block = ev.qfim_flat(&theta, MetricApprox::BlockDiagonal).matrix;
        for i in 0..4 {
            assert!((full[(i, i)] - diag[(i, i)]).abs() < 1e-10);
            for j in 0..4 {
                if i != j {
                    assert_eq!(diag[(i, j)], 0.0);
                }
                let same_layer = i % 2 == j % 2;
                if same_layer {
                    assert_eq!(block[(i, j)], full[(i, j)]);
                } else {
                    assert_eq!(block[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(ev.qcalls(), 10 + 4 + 6);
    }

    #[test]
    fn metric_is_gauge_invariant() {
        let g = fixture3();
        let (psi, derivs) = derivative_states(&g, CostDiagonal::new(&g).energies(), &[0.7, 0.2]);
        let phase = C64::from_polar(1.0, 1.234);
        let rot = |s: &StateVector| StateVector::from_amplitudes(s.amplitudes().iter().map(|a| a * phase).collect());
        let g1 = fubini_study_metric(&psi, &derivs);
        let g2 = fubini_study_metric(&rot(&psi), &derivs.iter().map(rot).collect::<Vec<_>>());
        assert!((g1 - g2).abs().max() < 1e-12);
    }

    #[test]
    fn derivative_states_match_finite_differences() {
        let g = fixture3();
        let diag = CostDiagonal::new(&g);
        let theta = [0.3, -0.5, 0.9, 0.1];
        let (_, derivs) = derivative_states(&g, diag.energies(), &theta);
        let h = 1e-6;
        for (j, d) in derivs.iter().enumerate() {
            let mut plus = theta;
            let mut minus = theta;
            plus[j] += h;
            minus[j] -= h;
            let sp = simulate(&g, diag.energies(), &plus, None);
            let sm = simulate(&g, diag.energies(), &minus, None);
            for k in 0..8 {
                let fd = (sp.amplitudes()[k] - sm.amplitudes()[k]) / (2.0 * h);
                assert!((fd - d.amplitudes()[k]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn sampling_replays_and_concentrates() {
        let g = fixture3();
        let cfg = AnsatzConfig::new(3, 1, ShotMode::Exact).unwrap();
        let theta = ParameterVector::new(&[0.4], &[0.3]);
        let mut a = Evaluator::new(g.clone(), cfg, 17).unwrap();
        let mut b = Evaluator::new(g.clone(), cfg, 17).unwrap();
        assert_eq!(a.sample_bitstrings(&theta, 200), b.sample_bitstrings(&theta, 200));
        assert_eq!(a.qcalls(), 1);

        let single = WeightedGraph::with_nonnegative_weights(2, vec![Edge { u: 0, v: 1, w: 0.0 }]);
        let cfg = AnsatzConfig::new(2, 1, ShotMode::Exact).unwrap();
        let mut ev = Evaluator::new(single, cfg, 3).unwrap();
        // exp(−iβX)|+⟩ = e^{−iβ}|+⟩, so probabilities stay uniform here
        let shots = ev.sample_bitstrings(&ParameterVector::new(&[0.0], &[0.9]), 4096);
        let mut counts = [0usize; 4];
        for s in &shots {
            counts[s.to_index()] += 1;
        }
        let sigma = (4096.0f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 1024.0).abs() < 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn expectation_bounded_by_ground_truth() {
        let g = generate_problem(4, 8, 0.8, (1.0, 5.0)).unwrap();
        let gt = brute_force(&g).unwrap();
        let ev = exact(&g, 2);
        let mut rng = crate::seed::stream(1, &["bound"]);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-3.2..3.2)).collect();
            let f = ev.exact_expectation(&theta);
            assert!(f >= gt.optimal_value - 1e-12 && f <= 1e-12);
            assert!((ev.state(&theta).norm() - 1.0).abs() < 1e-12);
        }
    }
}
