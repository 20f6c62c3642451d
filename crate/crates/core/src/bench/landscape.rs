//! Two-dimensional slices of the objective landscape.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::qaoa_sim::Evaluator;
use crate::seed::stream;

/// `values[i][j] = f(θ_c + a_i·d₁ + b_j·d₂)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LandscapeGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// `grid` offsets spanning `[−range, range]` inclusive. A single-point grid sits
/// on the lower corner `−range`.
pub fn grid_offsets(grid: usize, range: f64) -> Vec<f64> {
    match grid {
        0 => vec![],
        1 => vec![-range],
        _ => (0..grid).map(|i| -range + 2.0 * range * i as f64 / (grid - 1) as f64).collect(),
    }
}

/// Two independent Gaussian directions normalized to unit length.
pub fn random_directions(dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, &["landscape-directions"]);
    let mut unit = || {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let d1 = unit();
    let d2 = unit();
    (d1, d2)
}

/// Evaluates the exact objective on the grid; rows are computed in parallel.
pub fn landscape_scan(eval: &Evaluator, center: &[f64], d1: &[f64], d2: &[f64], grid: usize, range: f64) -> LandscapeGrid {
    let a = grid_offsets(grid, range);
    let b = a.clone();
    let values = a
        .par_iter()
        .map(|&ai| {
            b.iter()
                .map(|&bj| {
                    let theta: Vec<f64> =
                        center.iter().zip(d1).zip(d2).map(|((c, u), v)| c + ai * u + bj * v).collect();
                    eval.exact_expectation(&theta)
                })
                .collect()
        })
        .collect();
    LandscapeGrid { a, b, values }
}

impl LandscapeGrid {
    /// Whitespace-separated rows, one per `a` offset, shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn checksum(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
