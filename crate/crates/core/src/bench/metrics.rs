//! Trajectory metrics: convergence, local Lipschitz estimates and summary statistics.

use super::BenchError;

/// `|f − f*| ≤ ρ·|f*|`.
pub fn within_tolerance(f: f64, optimum: f64, rho: f64) -> bool {
    (f - optimum).abs() <= rho * optimum.abs()
}

/// True iff some value in `fs` comes within `rho` of `optimum` at least once.
pub fn is_converged(fs: impl IntoIterator<Item = f64>, optimum: f64, rho: f64) -> bool {
    first_within(fs, optimum, rho).is_some()
}

/// Index of the first value within `rho` of `optimum`.
pub fn first_within(fs: impl IntoIterator<Item = f64>, optimum: f64, rho: f64) -> Option<usize> {
    fs.into_iter().position(|f| within_tolerance(f, optimum, rho))
}

/// Steps shorter than this are skipped by the Lipschitz estimate.
pub const MIN_STEP: f64 = 1e-12;

/// `|Δf| / ‖Δθ‖₂` for every consecutive pair of `(θ, f)` points, skipping pairs
/// with `‖Δθ‖ < 1e−12`.
pub fn step_slopes(points: &[(&[f64], f64)]) -> Vec<f64> {
    points
        .windows(2)
        .filter_map(|w| {
            let (x0, f0) = w[0];
            let (x1, f1) = w[1];
            let dist = x0.iter().zip(x1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (dist >= MIN_STEP).then(|| (f1 - f0).abs() / dist)
        })
        .collect()
}

/// Per-trajectory local Lipschitz estimate `L̂ = max |Δf| / ‖Δθ‖`.
pub fn trajectory_lipschitz(points: &[(&[f64], f64)]) -> Option<f64> {
    step_slopes(points).into_iter().reduce(f64::max)
}

/// Average, population standard deviation, median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LipschitzStats {
    pub average: f64,
    pub std: f64,
    pub median: f64,
    pub iqr: f64,
    /// Number of samples summarized.
    pub samples: usize,
}

/// Quantile with linear interpolation between order statistics: position
/// `h = (n − 1)·q` on the sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<LipschitzStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let average = sorted.iter().sum::<f64>() / n;
    let std = (sorted.iter().map(|v| (v - average).powi(2)).sum::<f64>() / n).sqrt();
    Some(LipschitzStats {
        average,
        std,
        median: quantile(&sorted, 0.5),
        iqr: (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)).max(0.0),
        samples: sorted.len(),
    })
}

/// How per-run slopes are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzPooling {
    /// One `L̂` (the maximum slope) per run.
    #[default]
    PerRunMax,
    /// Every step slope of every kept run in one population.
    PooledSteps,
}

/// Lipschitz statistics over the runs that reach `rho` of `optimum`.
///
/// `runs` holds each run's `(θ, f)` trajectory. Runs never within `rho` are
/// excluded; fewer than half the runs remaining is an error.
pub fn lipschitz_estimate(
    runs: &[Vec<(&[f64], f64)>],
    optimum: f64,
    rho: f64,
    pooling: LipschitzPooling,
) -> Result<LipschitzStats, BenchError> {
    let kept: Vec<&Vec<(&[f64], f64)>> =
        runs.iter().filter(|r| is_converged(r.iter().map(|p| p.1), optimum, rho)).collect();
    if runs.is_empty() || 2 * kept.len() < runs.len() {
        return Err(BenchError::InsufficientRuns { kept: kept.len(), total: runs.len(), rho });
    }
    let values: Vec<f64> = match pooling {
        LipschitzPooling::PerRunMax => kept.iter().filter_map(|r| trajectory_lipschitz(r)).collect(),
        LipschitzPooling::PooledSteps => kept.iter().flat_map(|r| step_slopes(r)).collect(),
    };
    summarize(&values).ok_or(BenchError::InsufficientRuns { kept: 0, total: runs.len(), rho })
}

/// `|mean(a) − mean(b)|`; `None` if either cloud is empty.
pub fn centroid_gap(a: &[f64], b: &[f64]) -> Option<f64> {
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Some((mean(a)? - mean(b)?).abs())
}
