//! Gaussian-process regression with Matérn kernels.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::TunerError;
use crate::seed::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    #[serde(rename = "0.5")]
    Half,
    #[serde(rename = "1.5")]
    ThreeHalves,
    #[serde(rename = "2.5")]
    FiveHalves,
}

/// Stationary Matérn kernel with per-dimension length scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Matern {
    pub nu: Smoothness,
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
}

impl Matern {
    pub fn new(nu: Smoothness, length_scales: Vec<f64>, signal_variance: f64) -> Self {
        Self { nu, length_scales, signal_variance }
    }

    /// Kernel value as a function of the scaled distance `r`.
    pub fn of_distance(&self, r: f64) -> f64 {
        let s2 = self.signal_variance;
        match self.nu {
            Smoothness::Half => s2 * (-r).exp(),
            Smoothness::ThreeHalves => {
                let a = 3f64.sqrt() * r;
                s2 * (1.0 + a) * (-a).exp()
            }
            Smoothness::FiveHalves => {
                let a = 5f64.sqrt() * r;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.of_distance(self.scaled_distance(a, b))
    }
}

/// A fitted GP posterior over a fixed set of observations.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Matern,
    noise_variance: f64,
    prior_mean: f64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
    /// Diagonal jitter that made the kernel matrix factorizable.
    jitter: f64,
}

const JITTERS: [f64; 8] = [0.0, 1e-12, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5];

impl GpModel {
    /// Conditions the prior on `(xs, ys)`.
    ///
    /// If `K + σ²I` is not numerically positive definite, a diagonal jitter from
    /// `1e−12` up to `1e−5` (relative to the signal variance) is added before giving up.
    pub fn fit(
        kernel: Matern,
        noise_variance: f64,
        prior_mean: f64,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
    ) -> Result<Self, TunerError> {
        assert_eq!(xs.len(), ys.len());
        let n = xs.len();
        if n == 0 {
            return Ok(Self {
                kernel,
                noise_variance,
                prior_mean,
                xs,
                ys,
                chol: None,
                weights: DVector::zeros(0),
                jitter: 0.0,
            });
        }
        let base = DMatrix::from_fn(n, n, |i, j| kernel.eval(&xs[i], &xs[j]))
            + DMatrix::identity(n, n) * noise_variance;
        let resid = DVector::from_iterator(n, ys.iter().map(|y| y - prior_mean));
        for jitter in JITTERS {
            let k = &base + DMatrix::identity(n, n) * (jitter * kernel.signal_variance);
            if let Some(chol) = k.cholesky() {
                let weights = chol.solve(&resid);
                if weights.iter().all(|w| w.is_finite()) {
                    return Ok(Self { kernel, noise_variance, prior_mean, xs, ys, chol: Some(chol), weights, jitter });
                }
            }
        }
        Err(TunerError::Cholesky)
    }

    pub fn kernel(&self) -> &Matern {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_observations(&self) -> usize {
        self.xs.len()
    }

    /// Posterior mean and variance; the variance is clamped at zero from below.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let prior_var = self.kernel.of_distance(0.0);
        let Some(chol) = &self.chol else {
            return (self.prior_mean, prior_var);
        };
        let kx = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| self.kernel.eval(xi, x)));
        let mean = self.prior_mean + kx.dot(&self.weights);
        let v = chol.l().solve_lower_triangular(&kx).expect("triangular factor is invertible");
        (mean, (prior_var - v.dot(&v)).max(0.0))
    }

    /// `log p(y | X)` under the current kernel.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(chol) = &self.chol else { return 0.0 };
        let n = self.ys.len() as f64;
        let resid = DVector::from_iterator(self.ys.len(), self.ys.iter().map(|y| y - self.prior_mean));
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * resid.dot(&self.weights) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Bounds (natural log) for the fitted kernel parameters in the unit cube.
const LOG_LENGTH: (f64, f64) = (-4.605170185988091, std::f64::consts::LN_10); // 0.01 .. 10
const LOG_SIGNAL: (f64, f64) = (-4.605170185988091, 4.605170185988091); // 0.01 .. 100
const LOG_NOISE: (f64, f64) = (-13.815510557964274, 0.0); // 1e-6 .. 1

/// Fits length scales, signal variance and noise by maximizing the marginal
/// likelihood with a seeded multi-start compass search in log space.
pub fn fit_marginal_likelihood(
    nu: Smoothness,
    prior_mean: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    starts: usize,
    rng: &mut Rng64,
) -> Result<GpModel, TunerError> {
    let d = xs.first().map_or(0, |x| x.len());
    let bounds: Vec<(f64, f64)> =
        std::iter::repeat_n(LOG_LENGTH, d).chain([LOG_SIGNAL, LOG_NOISE]).collect();
    let build = |p: &[f64]| {
        let kernel = Matern::new(nu, p[..d].iter().map(|v| v.exp()).collect(), p[d].exp());
        GpModel::fit(kernel, p[d + 1].exp(), prior_mean, xs.to_vec(), ys.to_vec())
    };
    let score = |p: &[f64]| build(p).map_or(f64::NEG_INFINITY, |m| m.log_marginal_likelihood());

    let mut starts_list: Vec<Vec<f64>> = vec![std::iter::repeat_n((0.3f64).ln(), d).chain([0.0, (1e-4f64).ln()]).collect()];
    for _ in 1..starts.max(1) {
        starts_list.push(bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect());
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts_list {
        let (s, p) = compass_search(&start, &bounds, &score);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, p));
        }
    }
    let (_, p) = best.expect("at least one start");
    build(&p)
}

/// Maximizes `score` by coordinate moves with halving step; deterministic.
fn compass_search(start: &[f64], bounds: &[(f64, f64)], score: &dyn Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let mut x = start.to_vec();
    let mut fx = score(&x);
    let mut step = 1.0;
    let mut evals = 0;
    while step > 1e-3 && evals < 400 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step).clamp(bounds[i].0, bounds[i].1);
                if y[i] == x[i] {
                    continue;
                }
                let fy = score(&y);
                evals += 1;
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn kernel() -> Matern {
        Matern::new(Smoothness::FiveHalves, vec![0.3], 1.7)
    }

    #[test]
    fn prior_without_data() {
        let gp = GpModel::fit(kernel(), 0.0, 0.25, vec![], vec![]).unwrap();
        assert_eq!(gp.posterior(&[0.4]), (0.25, 1.7));
    }

    #[test]
    fn noiseless_interpolation() {
        let xs = vec![vec![0.1], vec![0.5], vec![0.8]];
        let ys = vec![1.0, -0.5, 0.3];
        let gp = GpModel::fit(kernel(), 0.0, 0.0, xs.clone(), ys.clone()).unwrap();
        assert_eq!(gp.jitter(), 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            let (m, v) = gp.posterior(x);
            assert!((m - y).abs() < 1e-8);
            assert!(v < 1e-8);
        }
    }

    #[test]
    fn matern_values() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            let k = Matern::new(nu, vec![0.5, 2.0], 3.0);
            assert_eq!(k.eval(&[0.2, 0.7], &[0.2, 0.7]), 3.0);
        }
        let k = Matern::new(Smoothness::Half, vec![1.0], 1.0);
        assert!((k.eval(&[0.0], &[2.0]) - (-2f64).exp()).abs() < 1e-15);
        let k = Matern::new(Smoothness::ThreeHalves, vec![1.0], 1.0);
        let a = 3f64.sqrt();
        assert!((k.eval(&[0.0], &[1.0]) - (1.0 + a) * (-a).exp()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_fit_prefers_smooth_model_for_smooth_data() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin()).collect();
        let mut rng = Rng64::seed_from_u64(3);
        let gp = fit_marginal_likelihood(Smoothness::FiveHalves, 0.0, &xs, &ys, 4, &mut rng).unwrap();
        assert!(gp.kernel().length_scales[0] > 0.1, "{:?}", gp.kernel());
        let (m, _) = gp.posterior(&[0.55]);
        assert!((m - (1.65f64).sin()).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn stationarity(a in 0.0..1.0f64, b in 0.0..1.0f64, t in -2.0..2.0f64) {
            let k = Matern::new(Smoothness::ThreeHalves, vec![0.4], 1.0);
            prop_assert!((k.eval(&[a], &[b]) - k.eval(&[a + t], &[b + t])).abs() < 1e-12);
        }

        #[test]
        fn variance_non_increasing_with_data(
            pts in prop::collection::vec(0.0..1.0f64, 1..8),
            probe in 0.0..1.0f64,
        ) {
            let mut prev = f64::INFINITY;
            for i in 0..=pts.len() {
                let xs: Vec<Vec<f64>> = pts[..i].iter().map(|&p| vec![p]).collect();
                let ys = vec![0.0; i];
                let gp = GpModel::fit(kernel(), 1e-10, 0.0, xs, ys).unwrap();
                let (_, v) = gp.posterior(&[probe]);
                prop_assert!(v <= prev + 1e-9);
                prev = v;
            }
        }
    }
}
