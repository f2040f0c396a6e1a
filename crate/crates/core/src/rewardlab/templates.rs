//! Reward-hacking templates: real responses pushed far along the gradient
//! of a naive least-squares reward proxy, so an uninoculated model scores
//! them high.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curation::HackTemplate;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemplateConfig {
    /// Templates in the training pool.
    pub train_count: usize,
    /// Held-out templates used only for evaluation.
    pub heldout_count: usize,
    /// Push length range, in units of the RMS feature norm.
    pub push_min: f64,
    pub push_max: f64,
    pub ridge: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            train_count: 64,
            heldout_count: 64,
            push_min: 1.5,
            push_max: 3.0,
            ridge: 1e-3,
        }
    }
}

/// Unit gradient of the ridge-regression proxy `s ≈ β·x + b`.
pub fn proxy_direction(features: &[&[f64]], targets: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = features.len();
    if n == 0 || n != targets.len() {
        return Err(Error::dim("proxy_direction rows", targets.len(), n));
    }
    let d = features[0].len();
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { features[i][j] });
    let y = DVector::from_column_slice(targets);
    let mut gram = x.transpose() * &x;
    for j in 0..d {
        gram[(j, j)] += ridge * n as f64;
    }
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("proxy normal equations".into()))?
        .solve(&(x.transpose() * y));
    let dir: Vec<f64> = beta.iter().take(d).copied().collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Singular("proxy gradient is zero".into()));
    }
    Ok(dir.into_iter().map(|v| v / norm).collect())
}

/// `count` templates with ids starting at `first_id`, each built from a
/// random base row of `bases`. Targets are the worst labels `[-2, -2, -2]`.
pub fn craft_templates(
    bases: &[&[f64]],
    direction: &[f64],
    cfg: &TemplateConfig,
    count: usize,
    first_id: usize,
    seed: u64,
) -> Result<Vec<HackTemplate>> {
    if bases.is_empty() && count > 0 {
        return Err(Error::InvalidParameter("no base responses for templates".into()));
    }
    if !(cfg.push_min > 0.0 && cfg.push_max >= cfg.push_min) {
        return Err(Error::InvalidConfig(
            "template push range must satisfy 0 < min <= max".into(),
        ));
    }
    let rms =
        (bases.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / bases.len().max(1) as f64).sqrt();
    let mut rng = stream(seed, "rewardlab/templates", first_id as u64);
    (0..count)
        .map(|i| {
            let base = bases[rng.random_range(0..bases.len())];
            if base.len() != direction.len() {
                return Err(Error::dim("template base", direction.len(), base.len()));
            }
            let push = rms * rng.random_range(cfg.push_min..=cfg.push_max);
            Ok(HackTemplate {
                id: first_id + i,
                feature: base.iter().zip(direction).map(|(b, d)| b + push * d).collect(),
                target: [-2.0, -2.0, -2.0],
            })
        })
        .collect()
}
