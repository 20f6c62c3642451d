//! Statevector kernels for the QAOA layers.
//!
//! Layout: amplitude `k` belongs to the basis state whose bit `i` is vertex `i`.

use nalgebra::Complex;

use crate::problems::{cut_value_of_index, WeightedGraph};

pub type C64 = Complex<f64>;

/// Normalized amplitudes of an `n`-qubit state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub(crate) amplitudes: Vec<C64>,
}

impl StateVector {
    /// `|+⟩^⊗n`, i.e. `H^⊗n |0…0⟩`.
    pub fn uniform(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let a = 1.0 / (dim as f64).sqrt();
        Self { amplitudes: vec![C64::new(a, 0.0); dim] }
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn n_qubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `Σ_k |a_k|² d_k` for a diagonal observable.
    pub fn diagonal_expectation(&self, diagonal: &[f64]) -> f64 {
        self.amplitudes
            .iter()
            .zip(diagonal)
            .map(|(a, d)| a.norm_sqr() * d)
            .sum()
    }
}

/// Cost eigenvalue of every basis state; entry `k` equals the cut value of `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDiagonal {
    energies: Vec<f64>,
}

impl CostDiagonal {
    pub fn new(graph: &WeightedGraph) -> Self {
        let dim = 1usize << graph.n_vertices();
        Self { energies: (0..dim).map(|k| cut_value_of_index(graph, k)).collect() }
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// `exp(i·phi)` through `f64::sin_cos`, whose results do not depend on the
/// optimization level (`Complex::from_polar` may round differently in debug builds).
fn unit_phase(phi: f64) -> C64 {
    let (s, c) = phi.sin_cos();
    C64::new(c, s)
}

/// Multiplies amplitude `k` by `exp(−i·angle·diag_k)`.
pub(crate) fn apply_diagonal_phase(amps: &mut [C64], diag: &[f64], angle: f64) {
    for (a, &d) in amps.iter_mut().zip(diag) {
        *a *= unit_phase(-angle * d);
    }
}

/// `exp(−i·angle·X_q)` on one qubit.
pub(crate) fn apply_x_rotation(amps: &mut [C64], qubit: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    let mis = C64::new(0.0, -s);
    let bit = 1usize << qubit;
    for k in 0..amps.len() {
        if k & bit == 0 {
            let a = amps[k];
            let b = amps[k | bit];
            amps[k] = a * c + b * mis;
            amps[k | bit] = b * c + a * mis;
        }
    }
}

/// The mixer layer `exp(−i·β·Σ_q X_q)`.
pub(crate) fn apply_mixer(amps: &mut [C64], n_qubits: usize, beta: f64) {
    for q in 0..n_qubits {
        apply_x_rotation(amps, q, beta);
    }
}

/// `Σ_q X_q |ψ⟩`.
pub(crate) fn apply_x_sum(amps: &[C64], n_qubits: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    for q in 0..n_qubits {
        let bit = 1usize << q;
        for (k, o) in out.iter_mut().enumerate() {
            *o += amps[k ^ bit];
        }
    }
    out
}

/// Extra `exp(−i·delta·c_e)` for edge `(u, v)`, with `c_e = −1` on crossing states.
pub(crate) fn apply_edge_phase(amps: &mut [C64], u: usize, v: usize, delta: f64) {
    let crossing = unit_phase(delta);
    for (k, a) in amps.iter_mut().enumerate() {
        if ((k >> u) ^ (k >> v)) & 1 == 1 {
            *a *= crossing;
        }
    }
}
