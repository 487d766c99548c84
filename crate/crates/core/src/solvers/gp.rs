//! Gaussian-process regression with a squared-exponential kernel on the
//! mixed distance.
use crate::domain::SearchSpace;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Largest noise, relative to the signal variance, tried before giving up on
/// a factorization.
pub const MAX_JITTER: f64 = 1e-2;
pub const BASE_NOISE: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GpError {
    #[error("no training data")]
    Empty,
    #[error("kernel matrix is not positive definite even with jitter")]
    Factorization,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// Squared mixed distance: squared differences on numeric channels, one per
/// mismatched categorical channel.
pub fn sq_distance(categorical: &[bool], a: &[f64], b: &[f64]) -> f64 {
    categorical
        .iter()
        .zip(a.iter().zip(b))
        .map(|(&cat, (x, y))| {
            if cat {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            } else {
                (x - y) * (x - y)
            }
        })
        .sum()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median pairwise distance and sample variance, each falling back to 1
/// when zero or undefined; noise is `1e-6` of the signal variance.
pub fn heuristic_hyper(categorical: &[bool], inputs: &[Vec<f64>], outputs: &[f64]) -> GpHyper {
    let mut dists = Vec::new();
    for i in 0..inputs.len() {
        for j in i + 1..inputs.len() {
            dists.push(sq_distance(categorical, &inputs[i], &inputs[j]).sqrt());
        }
    }
    let length_scale = median(dists).filter(|&l| l > 0.0 && l.is_finite()).unwrap_or(1.0);
    let n = outputs.len() as f64;
    let var = if outputs.len() >= 2 {
        let mean = outputs.iter().sum::<f64>() / n;
        outputs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let signal_variance = if var > 0.0 && var.is_finite() { var } else { 1.0 };
    GpHyper {
        length_scale,
        signal_variance,
        noise_variance: BASE_NOISE * signal_variance,
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    categorical: Vec<bool>,
    inputs: Vec<Vec<f64>>,
    prior_mean: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Fits on encoded inputs with heuristic hyperparameters.
    pub fn fit(space: &SearchSpace, inputs: Vec<Vec<f64>>, outputs: &[f64]) -> Result<Self, GpError> {
        let categorical: Vec<bool> = space.variables().iter().map(|v| v.is_categorical()).collect();
        let hyper = heuristic_hyper(&categorical, &inputs, outputs);
        Self::with_hyper(categorical, inputs, outputs, hyper)
    }

    /// Fits with the given hyperparameters. The noise variance is raised
    /// tenfold at a time, up to `MAX_JITTER` of the signal variance, until the
    /// kernel matrix factors.
    pub fn with_hyper(categorical: Vec<bool>, inputs: Vec<Vec<f64>>, outputs: &[f64], hyper: GpHyper) -> Result<Self, GpError> {
        let n = inputs.len();
        if n == 0 || outputs.len() != n {
            return Err(GpError::Empty);
        }
        let prior_mean = outputs.iter().sum::<f64>() / n as f64;
        let y = DVector::from_iterator(n, outputs.iter().map(|v| v - prior_mean));
        let mut model = Self {
            categorical,
            inputs,
            prior_mean,
            hyper,
            chol: Cholesky::new(DMatrix::identity(1, 1)).expect("identity factors"),
            alpha: DVector::zeros(0),
        };
        let k = DMatrix::from_fn(n, n, |i, j| model.kernel(&model.inputs[i], &model.inputs[j]));
        let mut noise = hyper.noise_variance;
        loop {
            let mut m = k.clone();
            for i in 0..n {
                m[(i, i)] += noise;
            }
            if let Some(chol) = Cholesky::new(m) {
                model.alpha = chol.solve(&y);
                model.chol = chol;
                model.hyper.noise_variance = noise;
                return Ok(model);
            }
            noise = if noise > 0.0 { noise * 10.0 } else { BASE_NOISE * hyper.signal_variance };
            if noise > MAX_JITTER * hyper.signal_variance * (1.0 + 1e-12) {
                return Err(GpError::Factorization);
            }
        }
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let l = self.hyper.length_scale;
        self.hyper.signal_variance * (-sq_distance(&self.categorical, a, b) / (2.0 * l * l)).exp()
    }

    /// Posterior mean and variance at an encoded point. The variance is
    /// clamped at zero.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let n = self.inputs.len();
        let ks = DVector::from_iterator(n, self.inputs.iter().map(|xi| self.kernel(xi, x)));
        let mean = self.prior_mean + ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("triangular factor is invertible");
        let var = (self.hyper.signal_variance - v.dot(&v)).max(0.0);
        (mean, var)
    }
}
