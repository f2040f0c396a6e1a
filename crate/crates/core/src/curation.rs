//! Splits labeled responses into a Bradley-Terry pair set and a balanced
//! regression set, and injects reward-hacking templates as hard negatives.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::AggregatedLabel;
use crate::rng::stream;
use crate::synthworld::SynthResponse;

/// Default high-fidelity threshold on the weighted-score difference.
pub const DEFAULT_DELTA_MIN: f64 = 3.6;
/// Default share of eligible pairs routed to the pair set.
pub const DEFAULT_BT_FRAC: f64 = 0.85;
/// Default hard-negative substitution probability.
pub const DEFAULT_HARD_NEGATIVE_P: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub context_id: usize,
    pub chosen_id: usize,
    pub rejected_id: usize,
    /// `s_w(chosen) - s_w(rejected)` from the labels, before any substitution.
    pub delta: f64,
    pub hard_negative: bool,
    /// Template payload replacing the rejected response, when `hard_negative`.
    pub template_id: Option<usize>,
}

/// A formulaic reward-hacking response: features that score high under a
/// naive model, paired with the lowest possible targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HackTemplate {
    pub id: usize,
    pub feature: Vec<f64>,
    /// `[help, harm, s_w]`.
    pub target: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub response_id: usize,
    /// `[help, harm, s_w]`.
    pub target: [f64; 3],
    pub length_bin: usize,
    pub category: u8,
    pub sw_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCount {
    pub length_bin: usize,
    pub category: u8,
    pub sw_bin: usize,
    pub population: usize,
    pub drawn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedCorpus {
    /// Number of eligible pairs the split drew from.
    pub eligible: usize,
    pub d_bt: Vec<PreferencePair>,
    pub d_mse: Vec<MseRecord>,
    pub bins: Vec<BinCount>,
}

/// Whether pair-set members may also enter the regression pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    #[default]
    Allowed,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub bt_frac: f64,
    /// Ascending upper edges of the length bins; the last bin is open.
    pub length_edges: Vec<u32>,
    /// Number of equal-width weighted-score bins over `[-2, 2]`.
    pub sw_bins: usize,
    pub per_bin: usize,
    pub overlap: OverlapPolicy,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            bt_frac: DEFAULT_BT_FRAC,
            length_edges: vec![210],
            sw_bins: 4,
            per_bin: 40,
            overlap: OverlapPolicy::Allowed,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bt_frac) {
            return Err(Error::InvalidConfig(format!("bt_frac {} outside [0,1]", self.bt_frac)));
        }
        if self.per_bin == 0 || self.sw_bins == 0 {
            return Err(Error::InvalidConfig("per_bin and sw_bins must be >= 1".into()));
        }
        if self.length_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("length_edges must be strictly ascending".into()));
        }
        Ok(())
    }

    pub fn length_bin(&self, length: u32) -> usize {
        self.length_edges.iter().take_while(|&&e| length > e).count()
    }

    pub fn sw_bin(&self, s_w: f64) -> usize {
        let x = ((s_w + 2.0) / 4.0 * self.sw_bins as f64).floor();
        (x.max(0.0) as usize).min(self.sw_bins - 1)
    }
}

fn labels_by_id(labels: &[AggregatedLabel]) -> BTreeMap<usize, &AggregatedLabel> {
    labels.iter().map(|l| (l.response_id, l)).collect()
}

/// All same-context pairs whose weighted-score gap strictly exceeds
/// `delta_min`, oriented so the chosen side has the higher `s_w`.
pub fn mine_pairs(
    labels: &[AggregatedLabel],
    responses: &[SynthResponse],
    delta_min: f64,
) -> Result<Vec<PreferencePair>> {
    if !(delta_min >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_min must be >= 0, got {delta_min}"
        )));
    }
    let by_id = labels_by_id(labels);
    let mut by_ctx: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for r in responses {
        let l = by_id
            .get(&r.id)
            .ok_or_else(|| Error::DanglingId(format!("response {} has no label", r.id)))?;
        by_ctx.entry(r.context_id).or_default().push((r.id, l.s_w));
    }
    let mut out = Vec::new();
    for (ctx, members) in by_ctx {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, sa) = members[i];
                let (b, sb) = members[j];
                let delta = (sa - sb).abs();
                if delta > delta_min {
                    let (chosen_id, rejected_id) = if sa > sb { (a, b) } else { (b, a) };
                    out.push(PreferencePair {
                        context_id: ctx,
                        chosen_id,
                        rejected_id,
                        delta,
                        hard_negative: false,
                        template_id: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Routes `floor(bt_frac · |eligible|)` pairs to the pair set and builds
/// the regression set by drawing `min(per_bin, population)` responses from
/// every (length bin, category, weighted-score bin) cell.
pub fn split_bt_mse(
    eligible: &[PreferencePair],
    labels: &[AggregatedLabel],
    responses: &[SynthResponse],
    cfg: &SplitConfig,
    seed: u64,
) -> Result<CuratedCorpus> {
    cfg.validate()?;
    let n_bt = (cfg.bt_frac * eligible.len() as f64).floor() as usize;
    let mut rng = stream(seed, "curation/split", 0);
    let mut picked: Vec<usize> = sample(&mut rng, eligible.len(), n_bt.min(eligible.len())).into_vec();
    picked.sort_unstable();
    let d_bt: Vec<PreferencePair> = picked.iter().map(|&i| eligible[i].clone()).collect();

    let bt_members: BTreeSet<usize> = d_bt.iter().flat_map(|p| [p.chosen_id, p.rejected_id]).collect();
    let by_id = labels_by_id(labels);

    // Pool: remaining-pair members and non-paired responses, plus pair-set
    // members when overlap is allowed. Every labeled response lands in
    // exactly one of those groups, so the pool is a filter over responses.
    let mut cells: BTreeMap<(usize, u8, usize), Vec<MseRecord>> = BTreeMap::new();
    for r in responses {
        if cfg.overlap == OverlapPolicy::Disjoint && bt_members.contains(&r.id) {
            continue;
        }
        let l = by_id
            .get(&r.id)
            .ok_or_else(|| Error::DanglingId(format!("response {} has no label", r.id)))?;
        let rec = MseRecord {
            response_id: r.id,
            target: l.target(),
            length_bin: cfg.length_bin(r.length),
            category: r.category,
            sw_bin: cfg.sw_bin(l.s_w),
        };
        cells
            .entry((rec.length_bin, rec.category, rec.sw_bin))
            .or_default()
            .push(rec);
    }

    let mut d_mse = Vec::new();
    let mut bins = Vec::with_capacity(cells.len());
    for ((lb, cat, sb), members) in cells {
        let key = ((lb as u64) << 40) ^ (u64::from(cat) << 20) ^ sb as u64;
        let mut crng = stream(seed, "curation/cell", key);
        let take = cfg.per_bin.min(members.len());
        let mut idx = sample(&mut crng, members.len(), take).into_vec();
        idx.sort_unstable();
        d_mse.extend(idx.iter().map(|&i| members[i].clone()));
        bins.push(BinCount {
            length_bin: lb,
            category: cat,
            sw_bin: sb,
            population: members.len(),
            drawn: take,
        });
    }
    Ok(CuratedCorpus {
        eligible: eligible.len(),
        d_bt,
        d_mse,
        bins,
    })
}

/// Bernoulli per pair, or an exact `floor(p · n)` subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    #[default]
    Bernoulli,
    ExactFraction,
}

/// Replaces rejected responses with templates from `pool`.
pub fn inject_hard_negatives(
    d_bt: &[PreferencePair],
    p: f64,
    pool: &[HackTemplate],
    mode: InjectionMode,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "hard-negative probability {p} outside [0,1]"
        )));
    }
    if p > 0.0 && pool.is_empty() {
        return Err(Error::InvalidParameter("empty template pool with p > 0".into()));
    }
    let flags: Vec<bool> = match mode {
        InjectionMode::Bernoulli => (0..d_bt.len())
            .map(|i| p > 0.0 && stream(seed, "curation/hardneg", i as u64).random::<f64>() < p)
            .collect(),
        InjectionMode::ExactFraction => {
            let k = (p * d_bt.len() as f64).floor() as usize;
            let mut rng = stream(seed, "curation/hardneg-exact", 0);
            let mut f = vec![false; d_bt.len()];
            for i in sample(&mut rng, d_bt.len(), k) {
                f[i] = true;
            }
            f
        }
    };
    Ok(d_bt
        .iter()
        .zip(flags)
        .enumerate()
        .map(|(i, (pair, flag))| {
            let mut out = pair.clone();
            if flag {
                let t = stream(seed, "curation/template-pick", i as u64).random_range(0..pool.len());
                out.hard_negative = true;
                out.template_id = Some(pool[t].id);
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{WeightVector, CANONICAL_WEIGHTS};
    use crate::synthworld::ContextRegime;

    fn label(id: usize, s_w: f64) -> AggregatedLabel {
        AggregatedLabel {
            response_id: id,
            help: 0,
            harm: 0,
            var_help: 0.0,
            var_harm: 0.0,
            w_base: CANONICAL_WEIGHTS[2],
            w_target: CANONICAL_WEIGHTS[2],
            sigma_adj: 0.05,
            alpha: 0.0,
            w_final: WeightVector {
                w_help: 0.5,
                w_harm: 0.5,
            },
            s_w,
        }
    }

    fn resp(id: usize, ctx: usize) -> SynthResponse {
        SynthResponse {
            id,
            context_id: ctx,
            regime: ContextRegime(2),
            s_help: 0.0,
            s_harm: 0.0,
            length: 100 + (id as u32 % 300),
            category: (id % 3) as u8,
            feature: vec![0.0; 3],
        }
    }

    fn pairs(n: usize) -> Vec<PreferencePair> {
        (0..n)
            .map(|i| PreferencePair {
                context_id: i,
                chosen_id: 2 * i,
                rejected_id: 2 * i + 1,
                delta: 4.0,
                hard_negative: false,
                template_id: None,
            })
            .collect()
    }

    fn templates() -> Vec<HackTemplate> {
        vec![HackTemplate {
            id: 0,
            feature: vec![1.0; 3],
            target: [-2.0, -2.0, -2.0],
        }]
    }

    #[test]
    fn threshold_is_strict() {
        let labels = vec![label(0, 2.0), label(1, -2.0), label(2, 1.8), label(3, -1.8)];
        let rs = vec![resp(0, 0), resp(1, 0), resp(2, 1), resp(3, 1)];
        let got = mine_pairs(&labels, &rs, 3.6).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].chosen_id, got[0].rejected_id), (0, 1));
        assert_eq!(got[0].delta, 4.0);
    }

    #[test]
    fn lone_response_makes_no_pairs() {
        let got = mine_pairs(&[label(0, 2.0)], &[resp(0, 0)], 0.0).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn bt_fraction_floor() {
        let eligible = pairs(100);
        let labels: Vec<_> = (0..200).map(|i| label(i, 0.0)).collect();
        let rs: Vec<_> = (0..200).map(|i| resp(i, i / 2)).collect();
        let c = split_bt_mse(&eligible, &labels, &rs, &SplitConfig::default(), 1).unwrap();
        assert_eq!(c.d_bt.len(), 85);
        let zero = SplitConfig {
            bt_frac: 0.0,
            overlap: OverlapPolicy::Disjoint,
            per_bin: 1000,
            ..Default::default()
        };
        let c0 = split_bt_mse(&eligible, &labels, &rs, &zero, 1).unwrap();
        assert!(c0.d_bt.is_empty());
        assert_eq!(c0.d_mse.len(), 200);
    }

    #[test]
    fn disjoint_policy_excludes_pair_members() {
        let eligible = pairs(10);
        let labels: Vec<_> = (0..20).map(|i| label(i, 0.0)).collect();
        let rs: Vec<_> = (0..20).map(|i| resp(i, i / 2)).collect();
        let cfg = SplitConfig {
            overlap: OverlapPolicy::Disjoint,
            per_bin: 100,
            ..Default::default()
        };
        let c = split_bt_mse(&eligible, &labels, &rs, &cfg, 2).unwrap();
        let used: BTreeSet<usize> = c.d_bt.iter().flat_map(|p| [p.chosen_id, p.rejected_id]).collect();
        assert!(c.d_mse.iter().all(|m| !used.contains(&m.response_id)));
        assert_eq!(c.d_mse.len() + used.len(), 20);
    }

    #[test]
    fn invalid_fraction_rejected() {
        let cfg = SplitConfig {
            bt_frac: 1.5,
            ..Default::default()
        };
        assert!(matches!(
            split_bt_mse(&[], &[], &[], &cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn per_bin_cap_holds() {
        let labels: Vec<_> = (0..500).map(|i| label(i, (i % 9) as f64 * 0.5 - 2.0)).collect();
        let rs: Vec<_> = (0..500).map(|i| resp(i, i / 5)).collect();
        let cfg = SplitConfig {
            per_bin: 7,
            ..Default::default()
        };
        let c = split_bt_mse(&[], &labels, &rs, &cfg, 3).unwrap();
        for b in &c.bins {
            assert_eq!(b.drawn, b.population.min(7));
        }
        assert_eq!(c.d_mse.len(), c.bins.iter().map(|b| b.drawn).sum::<usize>());
    }

    #[test]
    fn injection_extremes() {
        let d = pairs(50);
        let none = inject_hard_negatives(&d, 0.0, &[], InjectionMode::Bernoulli, 1).unwrap();
        assert_eq!(none, d);
        let all = inject_hard_negatives(&d, 1.0, &templates(), InjectionMode::Bernoulli, 1).unwrap();
        assert!(all.iter().all(|p| p.hard_negative && p.template_id == Some(0)));
        assert!(inject_hard_negatives(&d, 0.5, &[], InjectionMode::Bernoulli, 1).is_err());
        let exact = inject_hard_negatives(&d, 0.1, &templates(), InjectionMode::ExactFraction, 1).unwrap();
        assert_eq!(exact.iter().filter(|p| p.hard_negative).count(), 5);
    }

    #[test]
    fn injection_rate_concentrates() {
        let d = pairs(10_000);
        let out = inject_hard_negatives(&d, 0.10, &templates(), InjectionMode::Bernoulli, 7).unwrap();
        let k = out.iter().filter(|p| p.hard_negative).count() as f64;
        let sd = (10_000.0f64 * 0.1 * 0.9).sqrt();
        assert!((k - 1000.0).abs() <= 3.0 * sd, "{k}");
        // templates only ever replace the rejected side
        assert!(out.iter().zip(&d).all(|(a, b)| a.chosen_id == b.chosen_id));
    }
}
