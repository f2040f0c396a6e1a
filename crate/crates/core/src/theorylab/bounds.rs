//! Sampled verification of the pairwise-error bound and of the
//! covariance-based MSE approximation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{pairwise_sum, LinearFamily};
use crate::error::{Error, Result};
use crate::gradkit::sigmoid;
use crate::rng::stream;

/// One `(r_A, r_B, g_A, g_B)` quadruple.
pub type Quad = [f64; 4];

/// `|σ(r_A - r_B) - σ(g_A - g_B)|` and its bound
/// `(1/4) √(2 ((r_A - g_A)² + (r_B - g_B)²))`.
pub fn pair_bound(q: &Quad) -> (f64, f64) {
    let [ra, rb, ga, gb] = *q;
    let lhs = (sigmoid(ra - rb) - sigmoid(ga - gb)).abs();
    let rhs = 0.25 * (2.0 * ((ra - ga).powi(2) + (rb - gb).powi(2))).sqrt();
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBoundReport {
    pub count: usize,
    /// `max(lhs - rhs)`; non-positive when the bound holds everywhere.
    pub max_violation: f64,
    pub worst_index: usize,
    /// Violations above `slack`.
    pub violations: usize,
}

pub fn pair_bound_check(samples: &[Quad], slack: f64) -> Result<PairBoundReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "pair_bound_check needs at least one sample".into(),
        ));
    }
    let mut worst = (f64::NEG_INFINITY, 0);
    let mut violations = 0;
    for (i, q) in samples.iter().enumerate() {
        let (l, r) = pair_bound(q);
        let v = l - r;
        if v > worst.0 {
            worst = (v, i);
        }
        if v > slack {
            violations += 1;
        }
    }
    Ok(PairBoundReport {
        count: samples.len(),
        max_violation: worst.0,
        worst_index: worst.1,
        violations,
    })
}

/// Gaussian-perturbed quadruples at several scales, followed by saturation
/// stress cases (`|Δg| = 50` with `r = 0`, and mirrored variants).
pub fn pair_bound_samples(count: usize, seed: u64) -> Vec<Quad> {
    let mut rng = stream(seed, "theorylab/pair-bound", 0);
    let stress: Vec<Quad> = vec![
        [0.0, 0.0, 25.0, -25.0],
        [0.0, 0.0, -25.0, 25.0],
        [0.0, 0.0, 50.0, 0.0],
        [0.0, 0.0, 0.0, -50.0],
        [50.0, -50.0, -50.0, 50.0],
        [1e-9, 0.0, 0.0, 1e-9],
    ];
    let n_random = count.saturating_sub(stress.len());
    let mut out: Vec<Quad> = (0..n_random)
        .map(|i| {
            let scale = [0.01, 0.3, 1.0, 5.0, 30.0][i % 5];
            let ga: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
            let gb: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
            let ea: f64 = scale * rng.sample::<f64, _>(StandardNormal);
            let eb: f64 = scale * rng.sample::<f64, _>(StandardNormal);
            [ga + ea, gb + eb, ga, gb]
        })
        .collect();
    out.extend(stress.into_iter().take(count - n_random));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGap {
    /// `∇rᵀ Cov ∇r + σ00`.
    pub predicted: f64,
    /// Mean squared error against a fresh noisy label.
    pub empirical: f64,
    /// `∇rᵀ Cov ∇r`.
    pub predicted_reducible: f64,
    /// Mean `(r̂ - g)²`.
    pub empirical_reducible: f64,
    /// `|predicted - empirical| / empirical`, 0 when both vanish.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMseReport {
    pub n: usize,
    pub replicates: usize,
    pub probes: Vec<ProbeGap>,
    pub median_relative_gap: f64,
}

impl CovMseReport {
    pub fn mean_predicted_reducible(&self) -> f64 {
        pairwise_sum(&self.probes.iter().map(|p| p.predicted_reducible).collect::<Vec<_>>()) / self.probes.len() as f64
    }

    pub fn mean_empirical_reducible(&self) -> f64 {
        pairwise_sum(&self.probes.iter().map(|p| p.empirical_reducible).collect::<Vec<_>>()) / self.probes.len() as f64
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Replicated holistic least-squares fits with `n` samples each. The
/// empirical parameter covariance predicts the squared error at each probe
/// covariate; the prediction is compared with the observed error.
pub fn cov_mse_check(
    family: &LinearFamily,
    n: usize,
    replicates: usize,
    probes: &DMatrix<f64>,
    seed: u64,
) -> Result<CovMseReport> {
    if replicates < 30 {
        return Err(Error::InvalidParameter(format!(
            "cov_mse_check needs >= 30 replicates, got {replicates}"
        )));
    }
    if probes.ncols() != family.covariate_dim() || probes.nrows() == 0 {
        return Err(Error::dim("covariance probes", family.covariate_dim(), probes.ncols()));
    }
    let d = family.dim();
    let fits: Vec<Option<DVector<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, "theorylab/cov-mse", r as u64);
            let design = family.design(&family.draw_covariates(n, &mut rng));
            let (_, y) = family.draw_labels(&design, &mut rng);
            let x = &design.holistic;
            (x.transpose() * x).cholesky().map(|c| c.solve(&(x.transpose() * y)))
        })
        .collect();
    let fits: Vec<DVector<f64>> = fits.into_iter().collect::<Option<_>>().ok_or_else(|| {
        Error::Singular("holistic design is rank deficient; the family is not identifiable at this n".into())
    })?;
    let rf = replicates as f64;
    let mean = fits.iter().fold(DVector::zeros(d), |a, t| a + t) / rf;
    let cov = fits
        .iter()
        .fold(DMatrix::zeros(d, d), |a, t| a + (t - &mean) * (t - &mean).transpose())
        / (rf - 1.0);

    let held = family.design(probes);
    let g = family.holistic_truth(&held);
    let sigma00 = family.holistic_noise;
    let sd = sigma00.sqrt();
    let mut noise_rng = stream(seed, "theorylab/cov-mse-probe", 0);
    let probes_out: Vec<ProbeGap> = (0..probes.nrows())
        .map(|j| {
            let grad = held.holistic.row(j).transpose();
            let predicted_reducible = (grad.transpose() * &cov * &grad)[(0, 0)];
            let mut sq = Vec::with_capacity(replicates);
            let mut red = Vec::with_capacity(replicates);
            for t in &fits {
                let r = grad.dot(t);
                let z: f64 = noise_rng.sample(StandardNormal);
                sq.push((r - g[j] - sd * z).powi(2));
                red.push((r - g[j]).powi(2));
            }
            let empirical = pairwise_sum(&sq) / rf;
            let predicted = predicted_reducible + sigma00;
            let relative_gap = if empirical == 0.0 && predicted == 0.0 {
                0.0
            } else {
                (predicted - empirical).abs() / empirical.abs().max(f64::MIN_POSITIVE)
            };
            ProbeGap {
                predicted,
                empirical,
                predicted_reducible,
                empirical_reducible: pairwise_sum(&red) / rf,
                relative_gap,
            }
        })
        .collect();
    let mut gaps: Vec<f64> = probes_out.iter().map(|p| p.relative_gap).collect();
    Ok(CovMseReport {
        n,
        replicates,
        median_relative_gap: median(&mut gaps),
        probes: probes_out,
    })
}

/// `(predicted ratio, empirical ratio)` of the reducible error at `n`
/// versus `2n`; both are ≈ 2 when the error scales as `1/n`.
pub fn cov_mse_scaling(
    family: &LinearFamily,
    n: usize,
    replicates: usize,
    probes: &DMatrix<f64>,
    seed: u64,
) -> Result<(f64, f64)> {
    let a = cov_mse_check(family, n, replicates, probes, seed)?;
    let b = cov_mse_check(family, 2 * n, replicates, probes, seed ^ 0x9e37_79b9)?;
    Ok((
        a.mean_predicted_reducible() / b.mean_predicted_reducible(),
        a.mean_empirical_reducible() / b.mean_empirical_reducible(),
    ))
}
