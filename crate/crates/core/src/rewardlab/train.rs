//! Minibatch training of reward networks on a curated corpus.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{RewardKind, RewardNet};
use crate::curation::{HackTemplate, MseRecord, PreferencePair};
use crate::error::{Error, Result};
use crate::gradkit::{loss_joint_grad, NumArray, ScoredPair, ScoredTarget, Sgd};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the regression term; `1 - lambda` weighs the ranking term.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Preference pairs per regression record in each minibatch.
    pub bt_per_mse: f64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            epochs: 60,
            batch_size: 48,
            learning_rate: 0.02,
            momentum: 0.9,
            seed: 0,
            bt_per_mse: 2.0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {} outside [0,1]", self.lambda)));
        }
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::InvalidConfig("epochs must be >= 1 and batch_size >= 2".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "learning_rate must be > 0 and momentum in [0,1)".into(),
            ));
        }
        if !(self.bt_per_mse > 0.0 && self.bt_per_mse.is_finite()) {
            return Err(Error::InvalidConfig("bt_per_mse must be positive".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::InvalidConfig("clip_norm must be >= 0".into()));
        }
        Ok(())
    }
}

/// Everything training reads: response features indexed by response id,
/// the template pool, and the two corpus partitions.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub features: &'a [Vec<f64>],
    pub templates: &'a [HackTemplate],
    pub pairs: &'a [PreferencePair],
    pub records: &'a [MseRecord],
}

impl<'a> TrainSet<'a> {
    fn feature(&self, id: usize) -> Result<&'a [f64]> {
        self.features
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::DanglingId(format!("no features for response {id}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    /// Batch composition; zero pairs means the stage was pure regression.
    pub pairs_per_batch: usize,
    pub records_per_batch: usize,
    pub epoch_loss: Vec<f64>,
    /// Mean loss over the last third of epochs is below the first third.
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub stages: Vec<StageTrace>,
}

impl LossTrace {
    pub fn decreasing(&self) -> bool {
        self.stages.iter().all(|s| s.decreasing)
    }
}

/// Which outputs a stage supervises.
struct Objective {
    name: &'static str,
    lambda: f64,
    /// Output index ranked by the pairwise term, if pairs are used.
    bt_out: Option<usize>,
    /// `(output index, target index into [help, harm, s_w])`.
    mse: Vec<(usize, usize)>,
}

fn trend_decreasing(xs: &[f64]) -> bool {
    let k = (xs.len() / 3).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    xs.len() < 2 || mean(&xs[xs.len() - k..]) < mean(&xs[..k])
}

struct Schedule {
    pair_order: Vec<usize>,
    rec_order: Vec<usize>,
    n_pairs: usize,
    n_recs: usize,
    steps: usize,
}

fn schedule(obj: &Objective, set: &TrainSet, cfg: &TrainConfig) -> Result<Schedule> {
    let use_pairs = obj.bt_out.is_some() && obj.lambda < 1.0;
    let use_recs = !obj.mse.is_empty() && obj.lambda > 0.0;
    if use_pairs && set.pairs.is_empty() {
        return Err(Error::DegenerateBatch(format!(
            "stage `{}` needs preference pairs",
            obj.name
        )));
    }
    if use_recs && set.records.is_empty() {
        return Err(Error::DegenerateBatch(format!(
            "stage `{}` needs regression records",
            obj.name
        )));
    }
    let (n_pairs, n_recs) = match (use_pairs, use_recs) {
        (true, true) => {
            let np = ((cfg.batch_size as f64 * cfg.bt_per_mse / (1.0 + cfg.bt_per_mse)).round() as usize)
                .clamp(1, cfg.batch_size - 1);
            (np, cfg.batch_size - np)
        }
        (true, false) => (cfg.batch_size, 0),
        (false, true) => (0, cfg.batch_size),
        (false, false) => {
            return Err(Error::DegenerateBatch(format!(
                "stage `{}` has no loss terms",
                obj.name
            )))
        }
    };
    let steps_for = |len: usize, per: usize| if per == 0 { 0 } else { len.div_ceil(per) };
    let steps = steps_for(set.pairs.len(), n_pairs).max(steps_for(set.records.len(), n_recs));
    Ok(Schedule {
        pair_order: (0..set.pairs.len()).collect(),
        rec_order: (0..set.records.len()).collect(),
        n_pairs,
        n_recs,
        steps,
    })
}

fn run_stage(
    net: &mut RewardNet,
    obj: &Objective,
    set: &TrainSet,
    cfg: &TrainConfig,
    step_counter: &mut usize,
) -> Result<StageTrace> {
    let templates: HashMap<usize, &HackTemplate> = set.templates.iter().map(|t| (t.id, t)).collect();
    let mut sched = schedule(obj, set, cfg)?;
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, net.param_count());
    let k = net.kind().output_dim();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut pair_cursor = 0;
    let mut rec_cursor = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = stream(cfg.seed, &format!("rewardlab/train/{}", obj.name), epoch as u64);
        sched.pair_order.shuffle(&mut rng);
        sched.rec_order.shuffle(&mut rng);
        let mut total = 0.0;
        for _ in 0..sched.steps {
            let mut rows: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size * 2);
            let mut pair_rows = Vec::with_capacity(sched.n_pairs);
            for _ in 0..sched.n_pairs {
                let p = &set.pairs[sched.pair_order[pair_cursor % set.pairs.len()]];
                pair_cursor += 1;
                let rejected = match p.template_id {
                    Some(t) if p.hard_negative => templates
                        .get(&t)
                        .map(|t| t.feature.as_slice())
                        .ok_or_else(|| Error::DanglingId(format!("template {t} not in pool")))?,
                    _ => set.feature(p.rejected_id)?,
                };
                pair_rows.push(rows.len());
                rows.push(set.feature(p.chosen_id)?);
                rows.push(rejected);
            }
            let mut rec_rows = Vec::with_capacity(sched.n_recs);
            for _ in 0..sched.n_recs {
                let r = &set.records[sched.rec_order[rec_cursor % set.records.len()]];
                rec_cursor += 1;
                rec_rows.push((rows.len(), r.target));
                rows.push(set.feature(r.response_id)?);
            }
            let dim = net.input_dim();
            let mut flat = Vec::with_capacity(rows.len() * dim);
            for r in &rows {
                if r.len() != dim {
                    return Err(Error::dim("training features", dim, r.len()));
                }
                flat.extend_from_slice(r);
            }
            let x = NumArray::matrix(rows.len(), dim, flat)?;
            let trace = net.forward_trace(&x)?;
            let out = trace.outputs();
            let bt = obj.bt_out.unwrap_or(0);
            let pairs: Vec<ScoredPair> = pair_rows
                .iter()
                .map(|&i| ScoredPair {
                    chosen: out[i * k + bt],
                    rejected: out[(i + 1) * k + bt],
                })
                .collect();
            let targets: Vec<ScoredTarget> = rec_rows
                .iter()
                .map(|(i, t)| ScoredTarget {
                    pred: obj.mse.iter().map(|&(o, _)| out[i * k + o]).collect(),
                    target: obj.mse.iter().map(|&(_, j)| t[j]).collect(),
                })
                .collect();
            let (loss, g) = loss_joint_grad(&pairs, &targets, obj.lambda)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step: *step_counter });
            }
            let mut grad_out = vec![0.0; rows.len() * k];
            for (&i, &(gc, gr)) in pair_rows.iter().zip(&g.pairs) {
                grad_out[i * k + bt] += gc;
                grad_out[(i + 1) * k + bt] += gr;
            }
            for ((i, _), gt) in rec_rows.iter().zip(&g.targets) {
                for (&(o, _), v) in obj.mse.iter().zip(gt) {
                    grad_out[i * k + o] += v;
                }
            }
            let mut grad = net.backward(&trace, &grad_out)?;
            if cfg.clip_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.clip_norm {
                    let c = cfg.clip_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= c);
                }
            }
            let mut params = net.params();
            opt.step(&mut params, &grad, Some(net.trainable()))?;
            net.set_params(&params)?;
            total += loss;
            *step_counter += 1;
        }
        epoch_loss.push(total / sched.steps as f64);
    }
    Ok(StageTrace {
        stage: obj.name.to_string(),
        pairs_per_batch: sched.n_pairs,
        records_per_batch: sched.n_recs,
        decreasing: trend_decreasing(&epoch_loss),
        epoch_loss,
    })
}

fn voter_objective(cfg: &TrainConfig) -> Objective {
    Objective {
        name: "voter",
        lambda: cfg.lambda,
        bt_out: Some(2),
        mse: vec![(2, 2)],
    }
}

/// Runs only the second sequential stage: trunk frozen, meta-voter trained.
pub fn train_voter(net: &mut RewardNet, set: &TrainSet, cfg: &TrainConfig) -> Result<StageTrace> {
    cfg.validate()?;
    if net.kind() != RewardKind::Sequential {
        return Err(Error::InvalidParameter("only sequential nets have a meta-voter".into()));
    }
    net.set_trunk_trainable(false);
    net.set_voter_trainable(true);
    let out = run_stage(net, &voter_objective(cfg), set, cfg, &mut 0);
    net.set_trunk_trainable(true);
    out
}

/// Trains `net` in place and returns its loss trace.
///
/// * single: ranking on the scalar, regression toward `s_w`;
/// * parallel: ranking on the weighted head, regression of all three heads
///   toward `[help, harm, s_w]`;
/// * sequential: the help/harm heads regress first; then the trunk is
///   frozen and the meta-voter trains on ranking plus regression toward
///   `s_w`.
pub fn train(net: &mut RewardNet, set: &TrainSet, cfg: &TrainConfig) -> Result<LossTrace> {
    cfg.validate()?;
    let mut steps = 0;
    let stages = match net.kind() {
        RewardKind::Single => vec![Objective {
            name: "joint",
            lambda: cfg.lambda,
            bt_out: Some(0),
            mse: vec![(0, 2)],
        }],
        RewardKind::Parallel => vec![Objective {
            name: "joint",
            lambda: cfg.lambda,
            bt_out: Some(2),
            mse: vec![(0, 0), (1, 1), (2, 2)],
        }],
        RewardKind::Sequential => vec![
            Objective {
                name: "heads",
                lambda: 1.0,
                bt_out: None,
                mse: vec![(0, 0), (1, 1)],
            },
            voter_objective(cfg),
        ],
    };
    let mut trace = LossTrace { stages: Vec::new() };
    for obj in &stages {
        match obj.name {
            "heads" => {
                net.set_trunk_trainable(true);
                net.set_voter_trainable(false);
            }
            "voter" => {
                net.set_trunk_trainable(false);
                net.set_voter_trainable(true);
            }
            _ => {}
        }
        trace.stages.push(run_stage(net, obj, set, cfg, &mut steps)?);
    }
    net.set_trunk_trainable(true);
    net.set_voter_trainable(true);
    Ok(trace)
}
