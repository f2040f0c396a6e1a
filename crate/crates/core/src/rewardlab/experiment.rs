//! End-to-end architecture comparison: world → labels → curation →
//! training → held-out evaluation, one seed at a time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{eval_pref, hard_negative_pass_rate, EvalItem, EvalPair, EvalReport, HardNegativeProbe};
use super::net::{build, NetDims, RewardKind, RewardNet};
use super::templates::{craft_templates, proxy_direction, TemplateConfig};
use super::train::{train, LossTrace, TrainConfig, TrainSet};
use crate::curation::{
    inject_hard_negatives, mine_pairs, split_bt_mse, CuratedCorpus, HackTemplate, InjectionMode, PreferencePair,
    SplitConfig, DEFAULT_DELTA_MIN, DEFAULT_HARD_NEGATIVE_P,
};
use crate::error::{Error, Result};
use crate::labeling::{aggregate_corpus, AdjustParams, AggregatedLabel};
use crate::rng::derive_seed;
use crate::synthworld::{annotate_world, gen_world, RaterNoise, SynthResponse, World, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub rater_noise: RaterNoise,
    pub adjust: AdjustParams,
    pub delta_min: f64,
    pub split: SplitConfig,
    pub hard_negative_p: f64,
    pub templates: TemplateConfig,
    /// Share of contexts held out for evaluation.
    pub holdout_frac: f64,
    pub net: NetDims,
    pub train: TrainConfig,
    pub thresholds: Vec<f64>,
}

impl Default for ExperimentConfig {
    /// A data-scarce world with wide noisy response features: a small
    /// training share, a narrow bottleneck trunk and a thin balanced MSE set.
    fn default() -> Self {
        Self {
            world: WorldConfig {
                n_contexts: 5000,
                response_dim: 64,
                feature_noise: 2.0,
                ..WorldConfig::default()
            },
            rater_noise: RaterNoise {
                help_std: 0.4,
                harm_std: 0.4,
                ..RaterNoise::default()
            },
            adjust: AdjustParams::default(),
            delta_min: DEFAULT_DELTA_MIN,
            split: SplitConfig {
                per_bin: 5,
                ..SplitConfig::default()
            },
            hard_negative_p: DEFAULT_HARD_NEGATIVE_P,
            templates: TemplateConfig::default(),
            holdout_frac: 0.8,
            net: NetDims {
                input_dim: 64,
                hidden: vec![256, 8],
                ..NetDims::default()
            },
            train: TrainConfig::default(),
            thresholds: vec![2.0, 4.0],
        }
    }
}

impl ExperimentConfig {
    /// Every component at its own default: the stock world, rater noise,
    /// curation split and a single-layer trunk.
    pub fn stock() -> Self {
        Self {
            world: WorldConfig::default(),
            rater_noise: RaterNoise::default(),
            split: SplitConfig::default(),
            holdout_frac: 0.3,
            net: NetDims::default(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.rater_noise.validate()?;
        self.adjust.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "holdout_frac {} outside (0,1)",
                self.holdout_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.hard_negative_p) {
            return Err(Error::InvalidConfig(format!(
                "hard_negative_p {} outside [0,1]",
                self.hard_negative_p
            )));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Data shared by every architecture trained on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub seed: u64,
    pub world: World,
    pub labels: Vec<AggregatedLabel>,
    /// Features indexed by response id.
    pub features: Vec<Vec<f64>>,
    /// Training-split moments used to standardize every feature.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub corpus: CuratedCorpus,
    /// `corpus.d_bt` after hard-negative injection.
    pub injected: Vec<PreferencePair>,
    pub train_templates: Vec<HackTemplate>,
    pub eval_items: Vec<EvalItem>,
    pub eval_pairs: Vec<EvalPair>,
    pub probes: Vec<HardNegativeProbe>,
}

impl Prepared {
    pub fn train_set(&self, with_injection: bool) -> TrainSet<'_> {
        TrainSet {
            features: &self.features,
            templates: &self.train_templates,
            pairs: if with_injection {
                &self.injected
            } else {
                &self.corpus.d_bt
            },
            records: &self.corpus.d_mse,
        }
    }

    /// A raw response feature mapped with the training-split moments.
    pub fn standardized(&self, raw: &[f64]) -> Vec<f64> {
        let mut x = raw.to_vec();
        standardize(&mut x, &self.feature_mean, &self.feature_std);
        x
    }
}

fn split_responses(world: &World, holdout_frac: f64) -> (Vec<SynthResponse>, Vec<SynthResponse>) {
    let n_train = ((1.0 - holdout_frac) * world.contexts.len() as f64).round() as usize;
    world.responses.iter().cloned().partition(|r| r.context_id < n_train)
}

/// Per-dimension mean and standard deviation (floored at 1e-12).
fn feature_moments(rs: &[SynthResponse]) -> (Vec<f64>, Vec<f64>) {
    let d = rs.first().map_or(0, |r| r.feature.len());
    let n = rs.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for r in rs {
        mean.iter_mut().zip(&r.feature).for_each(|(m, x)| *m += x / n);
    }
    let mut var = vec![0.0; d];
    for r in rs {
        var.iter_mut()
            .zip(&r.feature)
            .zip(&mean)
            .for_each(|((v, x), m)| *v += (x - m) * (x - m) / n);
    }
    (mean, var.into_iter().map(|v| v.sqrt().max(1e-12)).collect())
}

fn standardize(x: &mut [f64], mean: &[f64], std: &[f64]) {
    for ((v, m), s) in x.iter_mut().zip(mean).zip(std) {
        *v = (*v - m) / s;
    }
}

/// Builds the world, labels, curated training corpus, templates and the
/// held-out evaluation sets for one seed. Features are standardized with
/// training-split moments.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    cfg.validate()?;
    let world = gen_world(&cfg.world, seed)?;
    let bundles = annotate_world(&world, &cfg.rater_noise, seed)?;
    let labels = aggregate_corpus(&bundles, &world.responses, &cfg.adjust, seed)?;
    prepare_from(cfg, world, labels)
}

/// The curation half of [`prepare`], starting from an existing world and
/// its labels. The world's own seed drives every draw.
pub fn prepare_from(cfg: &ExperimentConfig, world: World, labels: Vec<AggregatedLabel>) -> Result<Prepared> {
    cfg.validate()?;
    let seed = world.seed;
    if labels.len() != world.responses.len() || labels.iter().enumerate().any(|(i, l)| l.response_id != i) {
        return Err(Error::DanglingId("labels must cover every response in id order".into()));
    }
    let (mut train_rs, mut held_rs) = split_responses(&world, cfg.holdout_frac);
    let (mean, std) = feature_moments(&train_rs);
    for r in train_rs.iter_mut().chain(held_rs.iter_mut()) {
        standardize(&mut r.feature, &mean, &std);
    }
    let mut features: Vec<Vec<f64>> = vec![Vec::new(); world.responses.len()];
    for r in train_rs.iter().chain(&held_rs) {
        features[r.id] = r.feature.clone();
    }

    let eligible = mine_pairs(&labels, &train_rs, cfg.delta_min)?;
    let corpus = split_bt_mse(&eligible, &labels, &train_rs, &cfg.split, seed)?;

    let rows: Vec<&[f64]> = corpus
        .d_mse
        .iter()
        .map(|m| features[m.response_id].as_slice())
        .collect();
    let sw: Vec<f64> = corpus.d_mse.iter().map(|m| m.target[2]).collect();
    let direction = proxy_direction(&rows, &sw, cfg.templates.ridge)?;
    let train_bases: Vec<&[f64]> = train_rs.iter().map(|r| r.feature.as_slice()).collect();
    let held_bases: Vec<&[f64]> = held_rs.iter().map(|r| r.feature.as_slice()).collect();
    let train_templates = craft_templates(
        &train_bases,
        &direction,
        &cfg.templates,
        cfg.templates.train_count,
        0,
        seed,
    )?;
    let held_templates = craft_templates(
        &held_bases,
        &direction,
        &cfg.templates,
        cfg.templates.heldout_count,
        cfg.templates.train_count,
        seed,
    )?;
    let injected = inject_hard_negatives(
        &corpus.d_bt,
        cfg.hard_negative_p,
        &train_templates,
        InjectionMode::Bernoulli,
        seed,
    )?;

    let mut slot = BTreeMap::new();
    let eval_items: Vec<EvalItem> = held_rs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            slot.insert(r.id, i);
            EvalItem {
                feature: r.feature.clone(),
                scores: labels[r.id].target(),
            }
        })
        .collect();
    let mut by_ctx: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in &held_rs {
        by_ctx.entry(r.context_id).or_default().push(slot[&r.id]);
    }
    let mut eval_pairs = Vec::new();
    for members in by_ctx.values() {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                eval_pairs.push(EvalPair {
                    a: members[i],
                    b: members[j],
                });
            }
        }
    }
    let held_eligible = mine_pairs(&labels, &held_rs, cfg.delta_min)?;
    let probes = if held_templates.is_empty() {
        Vec::new()
    } else {
        held_eligible
            .iter()
            .enumerate()
            .map(|(i, p)| HardNegativeProbe {
                chosen: features[p.chosen_id].clone(),
                template: held_templates[i % held_templates.len()].feature.clone(),
            })
            .collect()
    };
    Ok(Prepared {
        seed,
        world,
        labels,
        features,
        feature_mean: mean,
        feature_std: std,
        corpus,
        injected,
        train_templates,
        eval_items,
        eval_pairs,
        probes,
    })
}

/// Trains one architecture on prepared data with seeds derived from the
/// preparation seed and the architecture.
pub fn train_kind(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    kind: RewardKind,
    with_injection: bool,
) -> Result<(RewardNet, LossTrace)> {
    let dims = NetDims {
        input_dim: cfg.world.response_dim,
        ..cfg.net.clone()
    };
    let net_seed = derive_seed(prep.seed, "rewardlab/net", kind as u64);
    let mut net = build(kind, &dims, net_seed)?;
    let tcfg = TrainConfig {
        seed: derive_seed(prep.seed, "rewardlab/train", kind as u64),
        ..cfg.train.clone()
    };
    let trace = train(&mut net, &prep.train_set(with_injection), &tcfg)?;
    Ok((net, trace))
}

/// Held-out accuracy and hard-negative pass rate of a trained net.
pub fn evaluate(cfg: &ExperimentConfig, prep: &Prepared, net: &RewardNet) -> Result<EvalReport> {
    let mut report = eval_pref(net, &prep.eval_items, &prep.eval_pairs, &cfg.thresholds)?;
    report.hard_negative_pass_rate = hard_negative_pass_rate(net, &prep.probes)?;
    Ok(report)
}

/// Trains and evaluates one architecture on prepared data.
pub fn train_and_eval(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    kind: RewardKind,
    with_injection: bool,
) -> Result<(RewardNet, EvalReport)> {
    let (net, trace) = train_kind(cfg, prep, kind, with_injection)?;
    let mut report = evaluate(cfg, prep, &net)?;
    report.loss_trace = Some(trace);
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub n_bt: usize,
    pub n_mse: usize,
    pub n_eval_pairs: usize,
    pub reports: Vec<EvalReport>,
}

impl SeedResult {
    pub fn report(&self, kind: RewardKind) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.kind == kind)
    }
}

/// Runs every architecture on each seed; seeds run concurrently.
pub fn compare_architectures(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<SeedResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let prep = prepare(cfg, seed)?;
            let reports = RewardKind::ALL
                .iter()
                .map(|&k| train_and_eval(cfg, &prep, k, true).map(|(_, r)| r))
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedResult {
                seed,
                n_bt: prep.injected.len(),
                n_mse: prep.corpus.d_mse.len(),
                n_eval_pairs: prep.eval_pairs.len(),
                reports,
            })
        })
        .collect()
}

/// Mean of a per-seed metric, skipping seeds where it is absent.
pub fn mean_over_seeds(results: &[SeedResult], f: impl Fn(&SeedResult) -> Option<f64>) -> Option<f64> {
    let xs: Vec<f64> = results.iter().filter_map(f).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub seed: u64,
    pub with_injection: Option<f64>,
    pub without_injection: Option<f64>,
}

/// Hard-negative pass rate of the parallel net trained with and without
/// template injection on the same data.
pub fn hard_negative_robustness(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RobustnessResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let prep = prepare(cfg, seed)?;
            let (_, with) = train_and_eval(cfg, &prep, RewardKind::Parallel, true)?;
            let (_, without) = train_and_eval(cfg, &prep, RewardKind::Parallel, false)?;
            Ok(RobustnessResult {
                seed,
                with_injection: with.hard_negative_pass_rate,
                without_injection: without.hard_negative_pass_rate,
            })
        })
        .collect()
}
