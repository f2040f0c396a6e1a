//! Thresholded preference accuracy and hard-negative pass rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{RewardKind, RewardNet};
use super::train::LossTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Help,
    Harm,
    Weighted,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Help, Dimension::Harm, Dimension::Weighted];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Help => "help",
            Dimension::Harm => "harm",
            Dimension::Weighted => "weighted",
        }
    }
}

/// A held-out response with its labeled `[help, harm, s_w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub feature: Vec<f64>,
    pub scores: [f64; 3],
}

/// Indices into an `EvalItem` slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub dimension: Dimension,
    pub threshold: f64,
    pub n_pairs: usize,
    /// `None` when no pair reaches the threshold, or the architecture has
    /// no score for this dimension.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: RewardKind,
    pub cells: Vec<AccuracyCell>,
    pub loss_trace: Option<LossTrace>,
    pub hard_negative_pass_rate: Option<f64>,
}

impl EvalReport {
    pub fn accuracy(&self, dimension: Dimension, threshold: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.dimension == dimension && c.threshold == threshold)
            .and_then(|c| c.accuracy)
    }

    /// One row per dimension and threshold; absent cells print `--`.
    pub fn table(&self) -> String {
        let mut out = String::from("arch\tdimension\tthreshold\tn_pairs\taccuracy\n");
        for c in &self.cells {
            let acc = c.accuracy.map_or_else(|| "--".to_string(), |a| format!("{a:.9}"));
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                self.kind.name(),
                c.dimension.name(),
                c.threshold,
                c.n_pairs,
                acc
            ));
        }
        out
    }
}

/// Which output of `kind` carries `dim`, if any.
pub fn output_index(kind: RewardKind, dim: Dimension) -> Option<usize> {
    match (kind, dim) {
        (RewardKind::Single, Dimension::Weighted) => Some(0),
        (RewardKind::Single, _) => None,
        (_, d) => Some(d.index()),
    }
}

/// Scores every item in parallel.
pub fn score_items(net: &RewardNet, items: &[EvalItem]) -> Result<Vec<Vec<f64>>> {
    items.par_iter().map(|it| net.score(&it.feature)).collect()
}

/// Accuracy over pairs whose labeled difference reaches each threshold.
/// A pair counts as correct only when the model orders it strictly the
/// same way as the labels; model ties are incorrect.
pub fn accuracy_from_scores(
    kind: RewardKind,
    scores: &[Vec<f64>],
    items: &[EvalItem],
    pairs: &[EvalPair],
    thresholds: &[f64],
) -> Result<Vec<AccuracyCell>> {
    if scores.len() != items.len() {
        return Err(Error::dim("scores vs items", items.len(), scores.len()));
    }
    if let Some(p) = pairs.iter().find(|p| p.a >= items.len() || p.b >= items.len()) {
        return Err(Error::DanglingId(format!("pair ({}, {}) out of range", p.a, p.b)));
    }
    let mut cells = Vec::new();
    for dim in Dimension::ALL {
        let out = output_index(kind, dim);
        for &t in thresholds {
            let mut n = 0usize;
            let mut correct = 0usize;
            for p in pairs {
                let truth = items[p.a].scores[dim.index()] - items[p.b].scores[dim.index()];
                if truth.abs() < t || truth == 0.0 {
                    continue;
                }
                n += 1;
                if let Some(o) = out {
                    let pred = scores[p.a][o] - scores[p.b][o];
                    if pred * truth > 0.0 {
                        correct += 1;
                    }
                }
            }
            let accuracy = match (out, n) {
                (Some(_), n) if n > 0 => Some(correct as f64 / n as f64),
                _ => None,
            };
            cells.push(AccuracyCell {
                dimension: dim,
                threshold: t,
                n_pairs: n,
                accuracy,
            });
        }
    }
    Ok(cells)
}

pub fn eval_pref(net: &RewardNet, items: &[EvalItem], pairs: &[EvalPair], thresholds: &[f64]) -> Result<EvalReport> {
    let scores = score_items(net, items)?;
    Ok(EvalReport {
        kind: net.kind(),
        cells: accuracy_from_scores(net.kind(), &scores, items, pairs, thresholds)?,
        loss_trace: None,
        hard_negative_pass_rate: None,
    })
}

/// A held-out template paired with the response it should lose to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardNegativeProbe {
    pub chosen: Vec<f64>,
    pub template: Vec<f64>,
}

/// Fraction of probes whose template scores strictly below the chosen
/// response on the weighted output.
pub fn hard_negative_pass_rate(net: &RewardNet, probes: &[HardNegativeProbe]) -> Result<Option<f64>> {
    if probes.is_empty() {
        return Ok(None);
    }
    let w = net.kind().weighted_index();
    let passed: Result<Vec<bool>> = probes
        .par_iter()
        .map(|p| Ok(net.score(&p.chosen)?[w] > net.score(&p.template)?[w]))
        .collect();
    let passed = passed?;
    Ok(Some(passed.iter().filter(|&&b| b).count() as f64 / probes.len() as f64))
}
