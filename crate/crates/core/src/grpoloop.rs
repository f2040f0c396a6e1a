//! Group-relative policy optimization over finite candidate sets.
//!
//! A scorer network maps `context feature ++ response feature` to a logit;
//! the policy of a context is the softmax over its candidates. Rewards are
//! the weighted output of a frozen reward net, precomputed per candidate.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradkit::{Activation, Mlp, NumArray, Sgd};
use crate::labeling::CANONICAL_WEIGHTS;
use crate::rewardlab::{prepare, train_and_eval, ExperimentConfig, Prepared, RewardKind, RewardNet, TrainConfig};
use crate::rng::{derive_seed, stream};
use crate::synthworld::ContextRegime;

pub const DEFAULT_GROUP_SIZE: usize = 32;
pub const DEFAULT_CLIP: f64 = 0.2;
pub const DEFAULT_KL_COEF: f64 = 0.01;
pub const DEFAULT_ADV_EPSILON: f64 = 1e-8;

/// Group-normalized advantages `(r - mean) / (std + epsilon)` with the
/// population standard deviation. A zero-variance group yields exact zeros.
pub fn group_advantage(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "group of {} rewards, need at least 2",
            rewards.len()
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    // The computed mean of identical values can be off by an ulp.
    if var == 0.0 || rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let denom = var.sqrt() + epsilon;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    HelpfulDominant,
    SafeDominant,
    Filler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub s_help: f64,
    pub s_harm: f64,
    /// Standardized response feature.
    pub feature: Vec<f64>,
    /// Weighted reward-net score.
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaContext {
    pub id: usize,
    pub regime: ContextRegime,
    pub feature: Vec<f64>,
    pub candidates: Vec<Candidate>,
}

impl ArenaContext {
    /// Ground-truth weighted score of candidate `j` under the regime weight.
    pub fn true_score(&self, j: usize) -> f64 {
        let w = self.regime.base_weight();
        let c = &self.candidates[j];
        w.w_help * c.s_help + w.w_harm * c.s_harm
    }

    fn position(&self, kind: CandidateKind) -> Result<usize> {
        let mut it = self.candidates.iter().enumerate().filter(|(_, c)| c.kind == kind);
        match (it.next(), it.next()) {
            (Some((j, _)), None) => Ok(j),
            _ => Err(Error::InvalidParameter(format!(
                "context {} needs exactly one {kind:?} candidate",
                self.id
            ))),
        }
    }
}

/// Builds `n` contexts drawn from the prepared world's generative model.
/// Each holds one helpful-dominant candidate (help in [1,2], harm in
/// [-2,-1]), one safe-dominant candidate (mirrored) and `candidates - 2`
/// fillers with both scores in [-1,1], in shuffled order.
pub fn build_arena(
    prep: &Prepared,
    net: &RewardNet,
    n: usize,
    candidates: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<ArenaContext>> {
    if candidates < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 candidates, got {candidates}"
        )));
    }
    let world = &prep.world;
    let mixture = world.config.regime_mixture;
    let w_out = net.kind().weighted_index();
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, &format!("grpoloop/arena/{label}"), i as u64);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut regime = ContextRegime(mixture.iter().rposition(|&p| p > 0.0).unwrap_or(4) as u8);
            for (k, p) in mixture.iter().enumerate() {
                acc += p;
                if u < acc {
                    regime = ContextRegime(k as u8);
                    break;
                }
            }
            let feature = world.context_feature(regime, &mut rng);
            let w_help = regime.base_weight().w_help;
            let mut cands = Vec::with_capacity(candidates);
            for j in 0..candidates {
                let hi = rng.random_range(1.0..=2.0);
                let lo = rng.random_range(-2.0..=-1.0);
                let (kind, s_help, s_harm) = match j {
                    0 => (CandidateKind::HelpfulDominant, hi, lo),
                    1 => (CandidateKind::SafeDominant, lo, hi),
                    _ => (
                        CandidateKind::Filler,
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                    ),
                };
                let raw = world.response_feature(s_help, s_harm, w_help, &mut rng);
                let feature = prep.standardized(&raw);
                let reward = net.score(&feature)?[w_out];
                cands.push(Candidate {
                    kind,
                    s_help,
                    s_harm,
                    feature,
                    reward,
                });
            }
            cands.shuffle(&mut rng);
            Ok(ArenaContext {
                id: i,
                regime,
                feature,
                candidates: cands,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            activation: Activation::Relu,
        }
    }
}

/// Current scorer plus the frozen reference it is anchored to.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    scorer: Mlp,
    reference: Mlp,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn rows_of(ctx: &ArenaContext) -> Result<NumArray> {
    let d = ctx.feature.len() + ctx.candidates.first().map_or(0, |c| c.feature.len());
    let mut data = Vec::with_capacity(ctx.candidates.len() * d);
    for c in &ctx.candidates {
        data.extend_from_slice(&ctx.feature);
        data.extend_from_slice(&c.feature);
    }
    NumArray::matrix(ctx.candidates.len(), d, data)
}

fn logits_of(net: &Mlp, ctx: &ArenaContext) -> Result<Vec<f64>> {
    let out = net.forward(&rows_of(ctx)?)?.into_data();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogits { context_id: ctx.id });
    }
    Ok(out)
}

impl Policy {
    /// A fresh scorer whose output layer is zeroed, so the initial policy
    /// (and the reference) is uniform over candidates.
    pub fn new(context_dim: usize, response_dim: usize, cfg: &PolicyConfig, seed: u64) -> Result<Self> {
        let mut widths = vec![context_dim + response_dim];
        widths.extend(&cfg.hidden);
        widths.push(1);
        let mut rng = stream(seed, "grpoloop/policy", 0);
        let mut scorer = Mlp::new(&widths, cfg.activation, &mut rng)?;
        let fan_in = widths[widths.len() - 2];
        let n = scorer.param_count();
        scorer.params_mut()[n - fan_in - 1..].fill(0.0);
        Ok(Self {
            reference: scorer.clone(),
            scorer,
        })
    }

    pub fn from_scorer(scorer: Mlp) -> Result<Self> {
        if scorer.output_dim() != 1 {
            return Err(Error::dim("policy scorer output", 1, scorer.output_dim()));
        }
        Ok(Self {
            reference: scorer.clone(),
            scorer,
        })
    }

    pub fn scorer(&self) -> &Mlp {
        &self.scorer
    }

    pub fn reference(&self) -> &Mlp {
        &self.reference
    }

    pub fn logits(&self, ctx: &ArenaContext) -> Result<Vec<f64>> {
        logits_of(&self.scorer, ctx)
    }

    pub fn probs(&self, ctx: &ArenaContext) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(ctx)?))
    }

    pub fn reference_probs(&self, ctx: &ArenaContext) -> Result<Vec<f64>> {
        Ok(softmax(&logits_of(&self.reference, ctx)?))
    }

    /// Most probable candidate; ties go to the lowest index.
    pub fn choose(&self, ctx: &ArenaContext) -> Result<usize> {
        let l = self.logits(ctx)?;
        let mut best = 0;
        for (j, v) in l.iter().enumerate() {
            if *v > l[best] {
                best = j;
            }
        }
        Ok(best)
    }

    /// Mean exact `KL(current || reference)` over contexts.
    pub fn kl_to_reference(&self, contexts: &[ArenaContext]) -> Result<f64> {
        let kls: Vec<f64> = contexts
            .par_iter()
            .map(|c| {
                let lp = log_softmax(&self.logits(c)?);
                let lq = log_softmax(&logits_of(&self.reference, c)?);
                Ok(lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum())
            })
            .collect::<Result<_>>()?;
        Ok(kls.iter().sum::<f64>() / contexts.len().max(1) as f64)
    }

    /// Mean over contexts of the policy-expected reward.
    pub fn expected_reward(&self, contexts: &[ArenaContext]) -> Result<f64> {
        let rs: Vec<f64> = contexts
            .par_iter()
            .map(|c| {
                Ok(self
                    .probs(c)?
                    .iter()
                    .zip(&c.candidates)
                    .map(|(p, k)| p * k.reward)
                    .sum())
            })
            .collect::<Result<_>>()?;
        Ok(rs.iter().sum::<f64>() / contexts.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip: f64,
    pub kl_coef: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub contexts_per_step: usize,
    /// Gradient updates per sampled batch; the first always has ratio 1.
    pub policy_updates: usize,
    pub adv_epsilon: f64,
    /// Global gradient-norm cap per update; 0 disables.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: DEFAULT_GROUP_SIZE,
            clip: DEFAULT_CLIP,
            kl_coef: DEFAULT_KL_COEF,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 2,
            contexts_per_step: 10,
            policy_updates: 2,
            adv_epsilon: DEFAULT_ADV_EPSILON,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "group_size must be >= 2, got {}",
                self.group_size
            )));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "clip must be in (0,1), got {}",
                self.clip
            )));
        }
        if !(self.kl_coef >= 0.0) || !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "kl_coef and learning_rate must be >= 0, momentum in [0,1)".into(),
            ));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::InvalidConfig("clip_norm must be >= 0".into()));
        }
        if self.epochs == 0 || self.contexts_per_step == 0 || self.policy_updates == 0 {
            return Err(Error::InvalidConfig(
                "epochs, contexts_per_step and policy_updates must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One context's sampled group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub context_id: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Log-probabilities under the behavior (pre-update) policy.
    pub old_logp: Vec<f64>,
    pub ref_logp: Vec<f64>,
}

pub fn sample_group(policy: &Policy, ctx: &ArenaContext, cfg: &GrpoConfig, seed: u64) -> Result<GroupBatch> {
    let lp = log_softmax(&policy.logits(ctx)?);
    let lq = log_softmax(&logits_of(&policy.reference, ctx)?);
    let mut rng = stream(seed, "grpoloop/sample", ctx.id as u64);
    let mut actions = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut a = lp.len() - 1;
        for (j, l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                a = j;
                break;
            }
        }
        actions.push(a);
    }
    let rewards: Vec<f64> = actions.iter().map(|&a| ctx.candidates[a].reward).collect();
    Ok(GroupBatch {
        context_id: ctx.id,
        advantages: group_advantage(&rewards, cfg.adv_epsilon)?,
        old_logp: actions.iter().map(|&a| lp[a]).collect(),
        ref_logp: actions.iter().map(|&a| lq[a]).collect(),
        actions,
        rewards,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub mean_reward: f64,
    /// Sampled k3 estimate of `KL(current || reference)` before the update.
    pub kl: f64,
    /// Share of samples whose clipped term was active in the last update.
    pub clip_fraction: f64,
}

/// Surrogate-plus-penalty value and parameter gradient over sampled groups
/// (mean over every sample). Also returns the clipped-sample count.
pub fn surrogate_grad(
    policy: &Policy,
    contexts: &[&ArenaContext],
    groups: &[GroupBatch],
    cfg: &GrpoConfig,
) -> Result<(f64, Vec<f64>, usize)> {
    let total: usize = groups.iter().map(|g| g.actions.len()).sum();
    let inv = 1.0 / total.max(1) as f64;
    let parts: Vec<(f64, Vec<f64>, usize)> = contexts
        .par_iter()
        .zip(groups)
        .map(|(ctx, g)| {
            let trace = policy.scorer.forward_trace(&rows_of(ctx)?)?;
            let logits = trace.output();
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLogits { context_id: ctx.id });
            }
            let lp = log_softmax(logits);
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let mut glogits = vec![0.0; logits.len()];
            let mut value = 0.0;
            let mut clipped = 0;
            for i in 0..g.actions.len() {
                let a = g.actions[i];
                let adv = g.advantages[i];
                let ratio = (lp[a] - g.old_logp[i]).exp();
                let bounded = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let (surr, dsurr) = if bounded * adv < ratio * adv {
                    clipped += 1;
                    (bounded * adv, 0.0)
                } else {
                    (ratio * adv, ratio * adv)
                };
                let rr = (g.ref_logp[i] - lp[a]).exp();
                let kl = rr - (g.ref_logp[i] - lp[a]) - 1.0;
                value += (-surr + cfg.kl_coef * kl) * inv;
                // d/dlogp of (-surrogate + beta * k3).
                let c = (-dsurr + cfg.kl_coef * (1.0 - rr)) * inv;
                for (j, gl) in glogits.iter_mut().enumerate() {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    *gl += c * (onehot - p[j]);
                }
            }
            let (pg, _) = policy.scorer.backward(&trace, &glogits)?;
            Ok((value, pg, clipped))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; policy.scorer.param_count()];
    let mut value = 0.0;
    let mut clipped = 0;
    for (v, g, c) in parts {
        value += v;
        clipped += c;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((value, grad, clipped))
}

/// Samples one group per context from the current policy, then applies
/// `policy_updates` clipped-surrogate steps against that behavior policy.
pub fn grpo_step(
    policy: &mut Policy,
    contexts: &[&ArenaContext],
    cfg: &GrpoConfig,
    opt: &mut Sgd,
    step: u64,
) -> Result<StepDiagnostics> {
    let sample_seed = derive_seed(cfg.seed, "grpoloop/step", step);
    let groups: Vec<GroupBatch> = contexts
        .par_iter()
        .map(|c| sample_group(policy, c, cfg, sample_seed))
        .collect::<Result<_>>()?;
    let n: usize = groups.iter().map(|g| g.actions.len()).sum();
    let mean_reward = groups.iter().flat_map(|g| &g.rewards).sum::<f64>() / n as f64;
    let kl = groups
        .iter()
        .flat_map(|g| g.old_logp.iter().zip(&g.ref_logp))
        .map(|(lp, lq)| (lq - lp).exp() - (lq - lp) - 1.0)
        .sum::<f64>()
        / n as f64;
    let mut clip_fraction = 0.0;
    for _ in 0..cfg.policy_updates {
        let (_, mut grad, clipped) = surrogate_grad(policy, contexts, &groups, cfg)?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
            let c = cfg.clip_norm / norm;
            grad.iter_mut().for_each(|g| *g *= c);
        }
        opt.step(policy.scorer.params_mut(), &grad, None)?;
        clip_fraction = clipped as f64 / n as f64;
    }
    Ok(StepDiagnostics {
        mean_reward,
        kl,
        clip_fraction,
    })
}

/// Share of contexts per regime whose chosen candidate is the one the
/// regime calls for: helpful-dominant when help outweighs harm,
/// safe-dominant when harm outweighs help, either for an even split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationReport {
    pub rates: [Option<f64>; 5],
    pub counts: [usize; 5],
}

impl ArbitrationReport {
    pub fn rate(&self, regime: usize) -> Option<f64> {
        self.rates.get(regime).copied().flatten()
    }
}

pub fn arbitration_by(
    contexts: &[ArenaContext],
    mut choose: impl FnMut(&ArenaContext) -> Result<usize>,
) -> Result<ArbitrationReport> {
    let mut hits = [0usize; 5];
    let mut counts = [0usize; 5];
    for ctx in contexts {
        let helpful = ctx.position(CandidateKind::HelpfulDominant)?;
        let safe = ctx.position(CandidateKind::SafeDominant)?;
        let r = ctx.regime.index();
        let w = CANONICAL_WEIGHTS[r];
        let pick = choose(ctx)?;
        let ok = if w.w_help > w.w_harm {
            pick == helpful
        } else if w.w_harm > w.w_help {
            pick == safe
        } else {
            pick == helpful || pick == safe
        };
        counts[r] += 1;
        hits[r] += usize::from(ok);
    }
    let mut rates = [None; 5];
    for r in 0..5 {
        if counts[r] > 0 {
            rates[r] = Some(hits[r] as f64 / counts[r] as f64);
        }
    }
    Ok(ArbitrationReport { rates, counts })
}

pub fn arbitration_metric(policy: &Policy, contexts: &[ArenaContext]) -> Result<ArbitrationReport> {
    arbitration_by(contexts, |c| policy.choose(c))
}

/// One diagnostics record per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub arbitration: [Option<f64>; 5],
}

/// Runs `epochs` shuffled passes over `train` in batches of
/// `contexts_per_step`.
pub fn train_policy(
    policy: &mut Policy,
    train: &[ArenaContext],
    eval: &[ArenaContext],
    cfg: &GrpoConfig,
) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, policy.scorer.param_count());
    let mut records = Vec::new();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, "grpoloop/epoch", epoch as u64));
        for chunk in order.chunks(cfg.contexts_per_step) {
            let batch: Vec<&ArenaContext> = chunk.iter().map(|&i| &train[i]).collect();
            let d = grpo_step(policy, &batch, cfg, &mut opt, step as u64)?;
            records.push(StepRecord {
                step,
                mean_reward: d.mean_reward,
                kl: d.kl,
                clip_fraction: d.clip_fraction,
                arbitration: arbitration_metric(policy, eval)?.rates,
            });
            step += 1;
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaConfig {
    pub train_contexts: usize,
    pub eval_contexts: usize,
    pub candidates: usize,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            train_contexts: 500,
            eval_contexts: 2000,
            candidates: 4,
        }
    }
}

/// Everything one GRPO run reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoPipeline {
    /// Reward-model data and training: the stock world, with a longer
    /// schedule so the weighted head resolves the extreme regimes.
    pub reward: ExperimentConfig,
    pub arena: ArenaConfig,
    pub policy: PolicyConfig,
    pub grpo: GrpoConfig,
}

impl Default for GrpoPipeline {
    fn default() -> Self {
        Self {
            reward: ExperimentConfig {
                train: TrainConfig {
                    epochs: 150,
                    ..TrainConfig::default()
                },
                ..ExperimentConfig::stock()
            },
            arena: ArenaConfig::default(),
            policy: PolicyConfig::default(),
            grpo: GrpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoOutcome {
    pub seed: u64,
    pub start_reward: f64,
    pub end_reward: f64,
    pub start_arbitration: ArbitrationReport,
    pub end_arbitration: ArbitrationReport,
    pub final_kl: f64,
    pub records: Vec<StepRecord>,
}

/// Trains a parallel reward net on the seed's world, then optimizes a
/// fresh policy against its weighted score. Evaluation contexts hold only
/// the two dominant candidates.
pub fn grpo_experiment(pipeline: &GrpoPipeline, seed: u64) -> Result<GrpoOutcome> {
    let (exp, arena, policy_cfg, grpo) = (&pipeline.reward, &pipeline.arena, &pipeline.policy, &pipeline.grpo);
    let prep = prepare(exp, seed)?;
    let (net, _) = train_and_eval(exp, &prep, RewardKind::Parallel, true)?;
    let arena_seed = derive_seed(seed, "grpoloop/arena", 0);
    let train = build_arena(&prep, &net, arena.train_contexts, arena.candidates, arena_seed, "train")?;
    let eval = build_arena(&prep, &net, arena.eval_contexts, 2, arena_seed, "eval")?;
    let mut policy = Policy::new(
        exp.world.context_dim,
        exp.world.response_dim,
        policy_cfg,
        derive_seed(seed, "grpoloop/policy", 0),
    )?;
    let cfg = GrpoConfig {
        seed: derive_seed(seed, "grpoloop/train", 0),
        ..grpo.clone()
    };
    let start_reward = policy.expected_reward(&train)?;
    let start_arbitration = arbitration_metric(&policy, &eval)?;
    let records = train_policy(&mut policy, &train, &eval, &cfg)?;
    Ok(GrpoOutcome {
        seed,
        start_reward,
        end_reward: policy.expected_reward(&train)?,
        start_arbitration,
        end_arbitration: arbitration_metric(&policy, &eval)?,
        final_kl: policy.kl_to_reference(&train)?,
        records,
    })
}
