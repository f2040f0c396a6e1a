//! Loss functions used by the reward, contrastive and policy code.
//!
//! Every loss has a value-only form and a form that also returns the exact
//! gradient with respect to its inputs.

use super::array::NumArray;
use crate::error::{Error, Result};

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry pairwise loss `-ln σ(chosen - rejected)`.
pub fn loss_bt(chosen: f64, rejected: f64) -> f64 {
    softplus(-(chosen - rejected))
}

/// Bradley-Terry loss and its partial derivatives `(d/dchosen, d/drejected)`.
pub fn loss_bt_grad(chosen: f64, rejected: f64) -> (f64, f64, f64) {
    let delta = chosen - rejected;
    let s = sigmoid(-delta);
    (softplus(-delta), -s, s)
}

/// Squared Euclidean distance between `pred` and `target`.
pub fn loss_mse_vec(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim("loss_mse_vec", pred.len(), target.len()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum())
}

pub fn loss_mse_vec_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let v = loss_mse_vec(pred, target)?;
    Ok((v, pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect()))
}

/// How per-anchor contrastive terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Sum over anchors with a non-empty positive set.
    #[default]
    Sum,
    /// Mean over anchors with a non-empty positive set.
    Mean,
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Supervised contrastive loss over a pre-computed `n x n` logit matrix
/// (`logits[i][k] = z_i . z_k / τ`). Diagonal entries are ignored.
///
/// Positives of anchor `i` are the other rows with the same label; the
/// denominator runs over every other row. Anchors without positives add 0.
pub fn supcon_from_logits(logits: &NumArray, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if logits.shape() != [n, n] {
        return Err(Error::dim("supcon_from_logits", n * n, logits.len()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let pos: Vec<usize> = (0..n).filter(|&k| k != i && labels[k] == labels[i]).collect();
        if pos.is_empty() {
            continue;
        }
        let lse = logsumexp((0..n).filter(|&k| k != i).map(|k| row[k]));
        let mean_pos = pos.iter().map(|&p| row[p]).sum::<f64>() / pos.len() as f64;
        total += lse - mean_pos;
    }
    Ok(total)
}

/// Risk-aware supervised contrastive loss (sum over anchors).
///
/// Rows of `embeddings` are L2-normalized before scoring.
pub fn loss_supcon(embeddings: &NumArray, labels: &[usize], temperature: f64) -> Result<f64> {
    Ok(supcon_with_grad(embeddings, labels, temperature, Reduction::Sum)?.0)
}

/// Contrastive loss and its gradient with respect to the raw (unnormalized)
/// embeddings.
pub fn supcon_with_grad(
    embeddings: &NumArray,
    labels: &[usize],
    temperature: f64,
    reduction: Reduction,
) -> Result<(f64, NumArray)> {
    let n = embeddings.rows();
    if embeddings.ndim() != 2 {
        return Err(Error::InvalidParameter(
            "embeddings must be a (batch, dim) matrix".into(),
        ));
    }
    if n < 2 {
        return Err(Error::DegenerateBatch(format!("batch of {n} rows, need at least 2")));
    }
    if labels.len() != n {
        return Err(Error::dim("supcon labels", n, labels.len()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let d = embeddings.last_dim();
    let mut z = vec![0.0; n * d];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let x = embeddings.row(i);
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "embedding row {i} cannot be normalized"
            )));
        }
        norms[i] = nrm;
        for (zz, xx) in z[i * d..(i + 1) * d].iter_mut().zip(x) {
            *zz = xx / nrm;
        }
    }
    let zr = |i: usize| &z[i * d..(i + 1) * d];
    let mut logits = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            if k != i {
                logits[i * n + k] = zr(i).iter().zip(zr(k)).map(|(a, b)| a * b).sum::<f64>() / temperature;
            }
        }
    }

    // dL/dlogit for each (anchor, other) pair.
    let mut g = vec![0.0; n * n];
    let mut total = 0.0;
    let mut active = 0usize;
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        let pos: Vec<usize> = (0..n).filter(|&k| k != i && labels[k] == labels[i]).collect();
        if pos.is_empty() {
            continue;
        }
        active += 1;
        let lse = logsumexp((0..n).filter(|&k| k != i).map(|k| row[k]));
        let inv_p = 1.0 / pos.len() as f64;
        let mean_pos = pos.iter().map(|&p| row[p]).sum::<f64>() * inv_p;
        total += lse - mean_pos;
        for k in 0..n {
            if k != i {
                g[i * n + k] = (row[k] - lse).exp();
            }
        }
        for &p in &pos {
            g[i * n + p] -= inv_p;
        }
    }
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean if active > 0 => 1.0 / active as f64,
        Reduction::Mean => 1.0,
    };
    total *= scale;

    let mut gz = vec![0.0; n * d];
    for i in 0..n {
        for k in 0..n {
            let gik = g[i * n + k];
            if gik == 0.0 {
                continue;
            }
            let c = gik * scale / temperature;
            for t in 0..d {
                gz[i * d + t] += c * z[k * d + t];
                gz[k * d + t] += c * z[i * d + t];
            }
        }
    }
    // Back through the row normalization: (I - z z^T) g / |x|.
    let mut gx = vec![0.0; n * d];
    for i in 0..n {
        let zi = zr(i);
        let gi = &gz[i * d..(i + 1) * d];
        let dot: f64 = zi.iter().zip(gi).map(|(a, b)| a * b).sum();
        for t in 0..d {
            gx[i * d + t] = (gi[t] - zi[t] * dot) / norms[i];
        }
    }
    Ok((total, NumArray::matrix(n, d, gx)?))
}

/// A preference pair scored by a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub chosen: f64,
    pub rejected: f64,
}

/// A regression sample: model output and its target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTarget {
    pub pred: Vec<f64>,
    pub target: Vec<f64>,
}

/// Gradients of [`loss_joint_grad`] with respect to every score it read.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrad {
    /// `(d/dchosen, d/drejected)` per pair.
    pub pairs: Vec<(f64, f64)>,
    /// `d/dpred` per regression sample.
    pub targets: Vec<Vec<f64>>,
}

/// `-(1-λ)·mean ln σ(Δ) + λ·mean ‖r - s‖²`; an empty batch contributes 0.
pub fn loss_joint(pairs: &[ScoredPair], targets: &[ScoredTarget], lambda: f64) -> Result<f64> {
    Ok(loss_joint_grad(pairs, targets, lambda)?.0)
}

pub fn loss_joint_grad(pairs: &[ScoredPair], targets: &[ScoredTarget], lambda: f64) -> Result<(f64, JointGrad)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in [0,1], got {lambda}"
        )));
    }
    let mut bt = 0.0;
    let mut pair_grads = Vec::with_capacity(pairs.len());
    if !pairs.is_empty() {
        let w = (1.0 - lambda) / pairs.len() as f64;
        for p in pairs {
            let (v, gc, gr) = loss_bt_grad(p.chosen, p.rejected);
            bt += v;
            pair_grads.push((w * gc, w * gr));
        }
        bt /= pairs.len() as f64;
    }
    let mut mse = 0.0;
    let mut target_grads = Vec::with_capacity(targets.len());
    if !targets.is_empty() {
        let w = lambda / targets.len() as f64;
        for t in targets {
            let (v, g) = loss_mse_vec_grad(&t.pred, &t.target)?;
            mse += v;
            target_grads.push(g.into_iter().map(|x| w * x).collect());
        }
        mse /= targets.len() as f64;
    }
    Ok((
        (1.0 - lambda) * bt + lambda * mse,
        JointGrad {
            pairs: pair_grads,
            targets: target_grads,
        },
    ))
}
