//! Label aggregation: majority voting over five rater rounds, target
//! selection from score variances, and variance-aware stochastic
//! interpolation of the context weight vector.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, LabRng};
use crate::synthworld::{AnnotationBundle, SynthResponse, ROUNDS};

/// `[w_help, w_harm]`, both non-negative and summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct WeightVector {
    pub w_help: f64,
    pub w_harm: f64,
}

/// The five canonical weight options, ordered from helpfulness-first to
/// harmlessness-first.
pub const CANONICAL_WEIGHTS: [WeightVector; 5] = [
    WeightVector {
        w_help: 1.0,
        w_harm: 0.0,
    },
    WeightVector {
        w_help: 0.7,
        w_harm: 0.3,
    },
    WeightVector {
        w_help: 0.5,
        w_harm: 0.5,
    },
    WeightVector {
        w_help: 0.3,
        w_harm: 0.7,
    },
    WeightVector {
        w_help: 0.0,
        w_harm: 1.0,
    },
];

const SUM_TOL: f64 = 1e-12;

impl WeightVector {
    pub fn new(w_help: f64, w_harm: f64) -> Result<Self> {
        if !(w_help >= 0.0 && w_harm >= 0.0) || ((w_help + w_harm) - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "weight vector [{w_help}, {w_harm}] is not on the simplex"
            )));
        }
        Ok(Self { w_help, w_harm })
    }

    pub fn canonical(option: usize) -> Result<Self> {
        CANONICAL_WEIGHTS
            .get(option)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("weight option {option} out of range 0..4")))
    }

    /// Index into [`CANONICAL_WEIGHTS`] if this is exactly a canonical option.
    pub fn canonical_index(&self) -> Option<usize> {
        CANONICAL_WEIGHTS.iter().position(|c| c == self)
    }

    pub fn dot(&self, help: f64, harm: f64) -> f64 {
        self.w_help * help + self.w_harm * harm
    }

    /// `self + alpha * (target - self)`.
    pub fn lerp(&self, target: &WeightVector, alpha: f64) -> WeightVector {
        WeightVector {
            w_help: self.w_help + alpha * (target.w_help - self.w_help),
            w_harm: self.w_harm + alpha * (target.w_harm - self.w_harm),
        }
    }
}

impl From<WeightVector> for [f64; 2] {
    fn from(w: WeightVector) -> Self {
        [w.w_help, w.w_harm]
    }
}

impl TryFrom<[f64; 2]> for WeightVector {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        WeightVector::new(v[0], v[1])
    }
}

/// Output of [`majority_vote`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub help: i8,
    pub harm: i8,
    pub option: usize,
    pub w_base: WeightVector,
    pub var_help: f64,
    pub var_harm: f64,
}

/// Population variance (divide by the count).
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Most frequent score; ties go to the value closest to the round mean,
/// then to the smaller magnitude, then to the lower value.
fn score_mode(values: &[i8]) -> i8 {
    let mut counts: BTreeMap<i8, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len().max(1) as f64;
    counts
        .into_iter()
        .filter(|&(_, c)| c == best)
        .map(|(v, _)| v)
        .min_by(|&a, &b| {
            let da = (f64::from(a) - mean).abs();
            let db = (f64::from(b) - mean).abs();
            da.total_cmp(&db).then(a.abs().cmp(&b.abs())).then(a.cmp(&b))
        })
        .unwrap_or(0)
}

/// Most frequent weight option; ties go to the safer option (higher `w_harm`).
fn option_mode(options: &[u8]) -> usize {
    let mut counts = [0usize; 5];
    for &o in options {
        counts[usize::from(o).min(4)] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    (0..5).rev().find(|&i| counts[i] == best).unwrap_or(2)
}

/// Aggregates one bundle into modal scores, the modal base weight and the
/// per-dimension population variances of the raw round scores.
pub fn majority_vote(bundle: &AnnotationBundle) -> Vote {
    let help: Vec<i8> = bundle.rounds.iter().map(|r| r.help).collect();
    let harm: Vec<i8> = bundle.rounds.iter().map(|r| r.harm).collect();
    let options: Vec<u8> = bundle.rounds.iter().map(|r| r.option).collect();
    let option = option_mode(&options);
    let as_f = |v: &[i8]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
    Vote {
        help: score_mode(&help),
        harm: score_mode(&harm),
        option,
        w_base: CANONICAL_WEIGHTS[option],
        var_help: population_variance(&as_f(&help)),
        var_harm: population_variance(&as_f(&harm)),
    }
}

/// Chooses the interpolation target from the base weight and the score
/// variances.
///
/// The prioritized dimension keeps its emphasis (decisive target) when the
/// other dimension is noisier, and falls back to the neutral target
/// otherwise. A balanced base is returned unchanged.
pub fn select_target(w_base: WeightVector, var_help: f64, var_harm: f64) -> WeightVector {
    let (wh, ws) = (w_base.w_help, w_base.w_harm);
    if wh > ws && var_harm > var_help {
        CANONICAL_WEIGHTS[0]
    } else if (ws > wh && var_help <= var_harm) || (wh > ws && var_harm <= var_help) {
        CANONICAL_WEIGHTS[2]
    } else if ws > wh && var_help > var_harm {
        CANONICAL_WEIGHTS[4]
    } else {
        w_base
    }
}

/// How the interpolation step is drawn from `N(0, σ_adj²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `clip(|N|, 0, 1)`.
    #[default]
    Folded,
    /// `clip(N, 0, 1)`; negative draws become 0.
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjustParams {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub gamma_var: f64,
    pub step_mode: StepMode,
}

impl Default for AdjustParams {
    fn default() -> Self {
        Self {
            sigma_min: 0.05,
            sigma_max: 0.5,
            gamma_var: 0.1,
            step_mode: StepMode::Folded,
        }
    }
}

impl AdjustParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min <= sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.gamma_var >= 0.0 && self.gamma_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma_var must be >= 0, got {}",
                self.gamma_var
            )));
        }
        Ok(())
    }

    pub fn sigma_adj(&self, var_help: f64, var_harm: f64) -> f64 {
        (self.sigma_min + self.gamma_var * (var_help - var_harm).abs()).clamp(self.sigma_min, self.sigma_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub w_target: WeightVector,
    pub sigma_adj: f64,
    pub alpha: f64,
    pub w_final: WeightVector,
}

/// Draws an interpolation step from `N(0, sigma²)` and clips it to `[0, 1]`.
pub fn draw_step<R: Rng + ?Sized>(sigma: f64, mode: StepMode, rng: &mut R) -> Result<f64> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let x: f64 = normal.sample(rng);
    Ok(match mode {
        StepMode::Folded => x.abs().clamp(0.0, 1.0),
        StepMode::Clipped => x.clamp(0.0, 1.0),
    })
}

/// Variance-aware weight adjustment with a freshly drawn step.
pub fn adjust_weight<R: Rng + ?Sized>(
    w_base: WeightVector,
    var_help: f64,
    var_harm: f64,
    params: &AdjustParams,
    rng: &mut R,
) -> Result<Adjustment> {
    params.validate()?;
    let sigma_adj = params.sigma_adj(var_help, var_harm);
    let alpha = draw_step(sigma_adj, params.step_mode, rng)?;
    Ok(adjust_with_step(w_base, var_help, var_harm, params, alpha))
}

/// Same as [`adjust_weight`] with the step fixed by the caller.
pub fn adjust_with_step(
    w_base: WeightVector,
    var_help: f64,
    var_harm: f64,
    params: &AdjustParams,
    alpha: f64,
) -> Adjustment {
    let w_target = select_target(w_base, var_help, var_harm);
    Adjustment {
        w_target,
        sigma_adj: params.sigma_adj(var_help, var_harm),
        alpha,
        w_final: w_base.lerp(&w_target, alpha),
    }
}

/// Final per-response label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub response_id: usize,
    pub help: i8,
    pub harm: i8,
    #[serde(rename = "var_h")]
    pub var_help: f64,
    #[serde(rename = "var_s")]
    pub var_harm: f64,
    pub w_base: WeightVector,
    pub w_target: WeightVector,
    pub sigma_adj: f64,
    pub alpha: f64,
    pub w_final: WeightVector,
    pub s_w: f64,
}

impl AggregatedLabel {
    /// Regression target `[help, harm, s_w]`.
    pub fn target(&self) -> [f64; 3] {
        [f64::from(self.help), f64::from(self.harm), self.s_w]
    }
}

/// Labels one response from its bundle, drawing the step from `rng`.
pub fn label_bundle(bundle: &AnnotationBundle, params: &AdjustParams, rng: &mut LabRng) -> Result<AggregatedLabel> {
    let vote = majority_vote(bundle);
    let adj = adjust_weight(vote.w_base, vote.var_help, vote.var_harm, params, rng)?;
    Ok(AggregatedLabel {
        response_id: bundle.response_id,
        help: vote.help,
        harm: vote.harm,
        var_help: vote.var_help,
        var_harm: vote.var_harm,
        w_base: vote.w_base,
        w_target: adj.w_target,
        sigma_adj: adj.sigma_adj,
        alpha: adj.alpha,
        w_final: adj.w_final,
        s_w: adj.w_final.dot(f64::from(vote.help), f64::from(vote.harm)),
    })
}

/// Labels every response. Each response draws from its own stream derived
/// from `(seed, response_id)`, so the result does not depend on ordering.
pub fn aggregate_corpus(
    bundles: &[AnnotationBundle],
    responses: &[SynthResponse],
    params: &AdjustParams,
    seed: u64,
) -> Result<Vec<AggregatedLabel>> {
    params.validate()?;
    let by_id: BTreeMap<usize, &AnnotationBundle> = bundles.iter().map(|b| (b.response_id, b)).collect();
    if by_id.len() != bundles.len() {
        return Err(Error::DanglingId("duplicate annotation bundle ids".into()));
    }
    let mut out = Vec::with_capacity(responses.len());
    for r in responses {
        let bundle = by_id
            .get(&r.id)
            .ok_or_else(|| Error::DanglingId(format!("response {} has no annotation bundle", r.id)))?;
        if bundle.rounds.len() != ROUNDS {
            return Err(Error::InvalidParameter(format!(
                "bundle for response {} has {} rounds, expected {ROUNDS}",
                r.id,
                bundle.rounds.len()
            )));
        }
        let mut rng = stream(seed, "labeling", r.id as u64);
        out.push(label_bundle(bundle, params, &mut rng)?);
    }
    if out.len() != bundles.len() {
        let known: std::collections::BTreeSet<usize> = responses.iter().map(|r| r.id).collect();
        let orphan = bundles
            .iter()
            .find(|b| !known.contains(&b.response_id))
            .map(|b| b.response_id);
        return Err(Error::DanglingId(format!(
            "annotation bundle {orphan:?} has no response"
        )));
    }
    Ok(out)
}
