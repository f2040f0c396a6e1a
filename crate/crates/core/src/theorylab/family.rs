//! Linear-Gaussian reward families: every task reward is `θ·φ(x)` for a
//! task-specific linear feature map `φ(x) = M x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// How covariates `x` are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariates {
    /// `x ~ N(0, I)`.
    Gaussian,
    /// Every draw returns the same point.
    Constant(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFamily {
    /// Attribute maps `M_k` (`d x p`).
    pub attribute_maps: Vec<DMatrix<f64>>,
    /// Holistic map `M_s` (`d x p`).
    pub holistic_map: DMatrix<f64>,
    pub theta: DVector<f64>,
    /// Attribute label-noise variances `σ_kk`.
    pub attribute_noise: Vec<f64>,
    /// Holistic label-noise variance `σ_ss`.
    pub holistic_noise: f64,
    pub weights: Vec<f64>,
    pub covariates: Covariates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub dim: usize,
    pub attributes: usize,
    pub attribute_noise: f64,
    pub holistic_noise: f64,
    /// Task weights; empty means uniform.
    pub weights: Vec<f64>,
    /// `M_s = Σ w_k M_k` when set, an independent random map otherwise.
    pub correlated: bool,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            dim: 24,
            attributes: 2,
            attribute_noise: 1.0,
            holistic_noise: 0.25,
            weights: Vec::new(),
            correlated: true,
        }
    }
}

/// Per-sample feature vectors for every task.
#[derive(Debug, Clone)]
pub struct Design {
    /// `attributes[k]` is `n x d`, one row per sample.
    pub attributes: Vec<DMatrix<f64>>,
    pub holistic: DMatrix<f64>,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.holistic.nrows()
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

impl LinearFamily {
    pub fn new(
        attribute_maps: Vec<DMatrix<f64>>,
        holistic_map: DMatrix<f64>,
        theta: DVector<f64>,
        attribute_noise: Vec<f64>,
        holistic_noise: f64,
        weights: Vec<f64>,
        covariates: Covariates,
    ) -> Result<Self> {
        let d = theta.len();
        let p = holistic_map.ncols();
        if holistic_map.nrows() != d || attribute_maps.iter().any(|m| m.nrows() != d || m.ncols() != p) {
            return Err(Error::dim("feature map shape", d, holistic_map.nrows()));
        }
        if attribute_noise.len() != attribute_maps.len() || weights.len() != attribute_maps.len() {
            return Err(Error::dim(
                "per-attribute settings",
                attribute_maps.len(),
                attribute_noise.len(),
            ));
        }
        if attribute_noise.iter().chain([&holistic_noise]).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("noise variances must be positive".into()));
        }
        if let Covariates::Constant(x) = &covariates {
            if x.len() != p {
                return Err(Error::dim("constant covariate", p, x.len()));
            }
        }
        Ok(Self {
            attribute_maps,
            holistic_map,
            theta,
            attribute_noise,
            holistic_noise,
            weights,
            covariates,
        })
    }

    /// Random maps and parameter from `seed`.
    pub fn generate(cfg: &FamilyConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.attributes == 0 {
            return Err(Error::InvalidConfig("dim and attributes must be positive".into()));
        }
        let weights = if cfg.weights.is_empty() {
            vec![1.0 / cfg.attributes as f64; cfg.attributes]
        } else {
            cfg.weights.clone()
        };
        let mut rng = stream(seed, "theorylab/family", 0);
        let d = cfg.dim;
        let maps: Vec<DMatrix<f64>> = (0..cfg.attributes).map(|_| gaussian_matrix(d, d, &mut rng)).collect();
        let holistic = if cfg.correlated {
            maps.iter()
                .zip(&weights)
                .fold(DMatrix::zeros(d, d), |acc, (m, w)| acc + m * *w)
        } else {
            gaussian_matrix(d, d, &mut rng)
        };
        let theta = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        Self::new(
            maps,
            holistic,
            theta,
            vec![cfg.attribute_noise; cfg.attributes],
            cfg.holistic_noise,
            weights,
            Covariates::Gaussian,
        )
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn covariate_dim(&self) -> usize {
        self.holistic_map.ncols()
    }

    pub fn attributes(&self) -> usize {
        self.attribute_maps.len()
    }

    /// `n x p` covariate rows.
    pub fn draw_covariates<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        match &self.covariates {
            Covariates::Gaussian => gaussian_matrix(n, self.covariate_dim(), rng),
            Covariates::Constant(x) => DMatrix::from_fn(n, x.len(), |_, j| x[j]),
        }
    }

    /// Feature rows `φ(x_i)ᵀ = x_iᵀ Mᵀ` for every task.
    pub fn design(&self, x: &DMatrix<f64>) -> Design {
        Design {
            attributes: self.attribute_maps.iter().map(|m| x * m.transpose()).collect(),
            holistic: x * self.holistic_map.transpose(),
        }
    }

    /// Noise-free holistic reward `g_s` on each row of `x`.
    pub fn holistic_truth(&self, design: &Design) -> DVector<f64> {
        &design.holistic * &self.theta
    }

    /// Noisy labels `(attribute labels per task, holistic labels)`.
    pub fn draw_labels<R: Rng + ?Sized>(&self, design: &Design, rng: &mut R) -> (Vec<DVector<f64>>, DVector<f64>) {
        let attrs = design
            .attributes
            .iter()
            .zip(&self.attribute_noise)
            .map(|(phi, var)| noisy(phi * &self.theta, *var, rng))
            .collect();
        let hol = noisy(&design.holistic * &self.theta, self.holistic_noise, rng);
        (attrs, hol)
    }
}

fn noisy<R: Rng + ?Sized>(mut v: DVector<f64>, var: f64, rng: &mut R) -> DVector<f64> {
    let sd = var.sqrt();
    for x in v.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += sd * z;
    }
    v
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error of the mean (sample standard deviation / √n).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt() / n.sqrt())
}
