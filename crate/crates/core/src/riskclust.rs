//! Contrastive risk clustering: a projection head trained with the
//! supervised contrastive loss over synthetic severity-labeled embeddings,
//! and cosine-geometry metrics that quantify the induced clustering.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradkit::{supcon_with_grad, Activation, Mlp, NumArray, Reduction, Sgd};
use crate::rng::{derive_seed, stream};

/// Severity levels: zero, low, medium, high.
pub const DEFAULT_CLASSES: usize = 4;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Embeddings with severity labels `0..classes`; class 0 is zero-risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCorpus {
    pub embeddings: NumArray,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl RiskCorpus {
    pub fn new(embeddings: NumArray, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if embeddings.ndim() != 2 {
            return Err(Error::InvalidParameter("embeddings must be a (n, dim) matrix".into()));
        }
        if labels.len() != embeddings.rows() {
            return Err(Error::dim("risk labels", embeddings.rows(), labels.len()));
        }
        if classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        let mut counts = vec![0usize; classes];
        for &l in &labels {
            *counts
                .get_mut(l)
                .ok_or_else(|| Error::InvalidParameter(format!("label {l} outside 0..{classes}")))? += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidParameter(format!("class {k} is empty")));
        }
        Ok(Self {
            embeddings,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.last_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Standard deviation along each shared nuisance direction.
    pub nuisance: f64,
    pub nuisance_dims: usize,
    /// Isotropic per-point noise.
    pub noise: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            classes: DEFAULT_CLASSES,
            per_class: 64,
            dim: 16,
            separation: 2.0,
            nuisance: 3.0,
            nuisance_dims: 4,
            noise: 0.3,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.per_class < 2 {
            return Err(Error::InvalidConfig(
                "need at least 2 classes with 2 members each".into(),
            ));
        }
        if self.dim < self.classes + self.nuisance_dims {
            return Err(Error::InvalidConfig(format!(
                "dim {} cannot hold {} class axes and {} nuisance axes",
                self.dim, self.classes, self.nuisance_dims
            )));
        }
        if !(self.separation >= 0.0 && self.nuisance >= 0.0 && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(
                "separation, nuisance and noise must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a severity-labeled corpus.
///
/// Class means are the centered vertices of a regular simplex at distance
/// `separation` from the origin, embedded in a random orthonormal frame.
/// Every point also carries Gaussian coordinates along `nuisance_dims`
/// shared directions orthogonal to the class subspace.
pub fn gen_risk_corpus(cfg: &CorpusConfig, seed: u64) -> Result<RiskCorpus> {
    cfg.validate()?;
    let (k, d) = (cfg.classes, cfg.dim);
    let mut rng = stream(seed, "riskclust/corpus", 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let raw = nalgebra::DMatrix::from_fn(d, d, |_, _| normal());
    let frame = raw.qr().q();

    // Centered one-hot vertices have norm sqrt((k-1)/k).
    let vscale = cfg.separation / ((k - 1) as f64 / k as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            (0..d)
                .map(|r| {
                    (0..k)
                        .map(|j| {
                            let v = if j == c { 1.0 } else { 0.0 } - 1.0 / k as f64;
                            frame[(r, j)] * v * vscale
                        })
                        .sum()
                })
                .collect()
        })
        .collect();

    let mut rng = stream(seed, "riskclust/points", 0);
    let mut data = Vec::with_capacity(k * cfg.per_class * d);
    let mut labels = Vec::with_capacity(k * cfg.per_class);
    for i in 0..k * cfg.per_class {
        // Interleave classes so prefixes stay balanced.
        let c = i % k;
        let mut x = means[c].clone();
        for j in 0..cfg.nuisance_dims {
            let g: f64 = StandardNormal.sample(&mut rng);
            for (r, v) in x.iter_mut().enumerate() {
                *v += cfg.nuisance * g * frame[(r, k + j)];
            }
        }
        for v in &mut x {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise * e;
        }
        data.extend(x);
        labels.push(c);
    }
    RiskCorpus::new(NumArray::matrix(k * cfg.per_class, d, data)?, labels, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub intra_similarity: f64,
    pub inter_similarity: f64,
    pub silhouette: f64,
}

fn normalized_rows(x: &NumArray) -> Result<Vec<Vec<f64>>> {
    (0..x.rows())
        .map(|i| {
            let r = x.row(i);
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::InvalidParameter(format!("row {i} cannot be normalized")));
            }
            Ok(r.iter().map(|v| v / n).collect())
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine-geometry metrics of `embeddings` under `labels`.
///
/// Silhouette uses cosine distance `1 - cos`; points alone in their class
/// score 0.
pub fn metrics_of(embeddings: &NumArray, labels: &[usize]) -> Result<ClusterMetrics> {
    if labels.len() != embeddings.rows() {
        return Err(Error::dim("metric labels", embeddings.rows(), labels.len()));
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "silhouette needs at least 2 clusters, got {}",
            sizes.len()
        )));
    }
    let z = normalized_rows(embeddings)?;
    let n = z.len();
    let slot: BTreeMap<usize, usize> = sizes.keys().enumerate().map(|(i, &l)| (l, i)).collect();
    let counts: Vec<usize> = sizes.values().copied().collect();

    // (intra sum, intra pairs, inter sum, inter pairs, silhouette)
    let per_anchor: Vec<(f64, usize, f64, usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = slot[&labels[i]];
            let mut sums = vec![0.0; counts.len()];
            for j in 0..n {
                if j != i {
                    sums[slot[&labels[j]]] += dot(&z[i], &z[j]);
                }
            }
            let mut inter = 0.0;
            for (c, s) in sums.iter().enumerate() {
                if c != own {
                    inter += s;
                }
            }
            let own_others = counts[own] - 1;
            let sil = if own_others == 0 {
                0.0
            } else {
                let a = 1.0 - sums[own] / own_others as f64;
                let b = (0..counts.len())
                    .filter(|&c| c != own)
                    .map(|c| 1.0 - sums[c] / counts[c] as f64)
                    .fold(f64::INFINITY, f64::min);
                let m = a.max(b);
                if m > 0.0 {
                    (b - a) / m
                } else {
                    0.0
                }
            };
            (sums[own], own_others, inter, n - 1 - own_others, sil)
        })
        .collect();
    let (mut is, mut ip, mut xs, mut xp, mut sil) = (0.0, 0usize, 0.0, 0usize, 0.0);
    for (a, b, c, d, e) in per_anchor {
        is += a;
        ip += b;
        xs += c;
        xp += d;
        sil += e;
    }
    Ok(ClusterMetrics {
        intra_similarity: if ip > 0 { is / ip as f64 } else { f64::NAN },
        inter_similarity: xs / xp as f64,
        silhouette: sil / n as f64,
    })
}

/// Applies `head` to every corpus row.
pub fn project(corpus: &RiskCorpus, head: &Mlp) -> Result<NumArray> {
    head.forward(&corpus.embeddings)
}

/// Metrics on the raw embeddings (`head = None`) or on their projections.
pub fn cluster_metrics(corpus: &RiskCorpus, head: Option<&Mlp>) -> Result<ClusterMetrics> {
    match head {
        Some(h) => metrics_of(&project(corpus, h)?, &corpus.labels),
        None => metrics_of(&corpus.embeddings, &corpus.labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            hidden: vec![32],
            out_dim: 8,
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.epochs == 0 || self.batch_size < 2 || self.out_dim == 0 {
            return Err(Error::InvalidConfig(
                "epochs, out_dim must be >= 1 and batch_size >= 2".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "learning_rate must be >= 0 and momentum in [0,1)".into(),
            ));
        }
        Ok(())
    }

    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(&self.hidden);
        w.push(self.out_dim);
        w
    }

    pub fn build_head(&self, input_dim: usize) -> Result<Mlp> {
        let mut rng = stream(self.seed, "riskclust/head", 0);
        Mlp::new(&self.widths(input_dim), self.activation, &mut rng)
    }
}

/// Index groups in order of first appearance in `labels`, so the batch
/// stream depends only on which rows share a label, never on label values.
fn groups_by_first_appearance(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let g = *slot.entry(l).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// One epoch of stratified batches: each batch takes an equal quota (at
/// least 2) from every class that has 2 or more members, cycling through a
/// per-epoch shuffle of each class.
pub fn stratified_batches(labels: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    let groups = groups_by_first_appearance(labels);
    if groups.iter().all(|g| g.len() < 2) {
        return Err(Error::InvalidConfig(
            "every class is a singleton, no batch can hold a positive pair".into(),
        ));
    }
    let quota = (batch_size / groups.len()).max(2);
    let mut rng = stream(seed, "riskclust/batches", epoch);
    let mut orders: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let mut o = g.clone();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let steps = labels.len().div_ceil(quota * groups.len());
    let mut cursors = vec![0usize; groups.len()];
    let mut batches = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut b = Vec::with_capacity(quota * groups.len());
        for (o, c) in orders.iter_mut().zip(cursors.iter_mut()) {
            let take = quota.min(o.len());
            for _ in 0..take {
                b.push(o[*c % o.len()]);
                *c += 1;
            }
        }
        batches.push(b);
    }
    Ok(batches)
}

fn gather_rows(x: &NumArray, idx: &[usize]) -> Result<NumArray> {
    let d = x.last_dim();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    NumArray::matrix(idx.len(), d, data)
}

/// Mean contrastive loss of one batch and the head's parameter gradient.
pub fn batch_loss_grad(head: &Mlp, x: &NumArray, labels: &[usize], temperature: f64) -> Result<(f64, Vec<f64>)> {
    let trace = head.forward_trace(x)?;
    let out = NumArray::matrix(trace.rows(), head.output_dim(), trace.output().to_vec())?;
    let (loss, g) = supcon_with_grad(&out, labels, temperature, Reduction::Mean)?;
    let (pg, _) = head.backward(&trace, g.data())?;
    Ok((loss, pg))
}

/// Trains `head` in place; returns the mean batch loss of every epoch.
pub fn train_projection(corpus: &RiskCorpus, head: &mut Mlp, cfg: &ProjectionConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if head.input_dim() != corpus.dim() {
        return Err(Error::dim("projection head input", corpus.dim(), head.input_dim()));
    }
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, head.param_count());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let batches = stratified_batches(&corpus.labels, cfg.batch_size, cfg.seed, epoch as u64)?;
        let mut total = 0.0;
        for b in &batches {
            let x = gather_rows(&corpus.embeddings, b)?;
            let labels: Vec<usize> = b.iter().map(|&i| corpus.labels[i]).collect();
            let (loss, grad) = batch_loss_grad(head, &x, &labels, cfg.temperature)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            opt.step(head.params_mut(), &grad, None)?;
            total += loss;
            step += 1;
        }
        trace.push(total / batches.len() as f64);
    }
    Ok(trace)
}

/// Projected coordinates of one corpus row, for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: usize,
    pub label: usize,
    pub coords: Vec<f64>,
}

pub fn embedding_dump(corpus: &RiskCorpus, head: Option<&Mlp>) -> Result<Vec<EmbeddingRow>> {
    let x = match head {
        Some(h) => project(corpus, h)?,
        None => corpus.embeddings.clone(),
    };
    Ok((0..x.rows())
        .map(|i| EmbeddingRow {
            id: i,
            label: corpus.labels[i],
            coords: x.row(i).to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteRun {
    pub seed: u64,
    pub initial: ClusterMetrics,
    pub trained: ClusterMetrics,
    pub loss_trace: Vec<f64>,
}

impl SilhouetteRun {
    pub fn gain(&self) -> f64 {
        self.trained.silhouette - self.initial.silhouette
    }
}

/// Generates a corpus, trains a fresh head and measures silhouette before
/// (raw embeddings) and after (projections).
pub fn silhouette_run(corpus_cfg: &CorpusConfig, proj: &ProjectionConfig, seed: u64) -> Result<SilhouetteRun> {
    silhouette_fit(corpus_cfg, proj, seed).map(|(run, _, _)| run)
}

/// [`silhouette_run`] that also returns the corpus and the trained head.
pub fn silhouette_fit(
    corpus_cfg: &CorpusConfig,
    proj: &ProjectionConfig,
    seed: u64,
) -> Result<(SilhouetteRun, RiskCorpus, Mlp)> {
    let corpus = gen_risk_corpus(corpus_cfg, derive_seed(seed, "riskclust/corpus", 0))?;
    let cfg = ProjectionConfig {
        seed: derive_seed(seed, "riskclust/train", 0),
        ..proj.clone()
    };
    let mut head = cfg.build_head(corpus.dim())?;
    let initial = cluster_metrics(&corpus, None)?;
    let loss_trace = train_projection(&corpus, &mut head, &cfg)?;
    let trained = cluster_metrics(&corpus, Some(&head))?;
    let run = SilhouetteRun {
        seed,
        initial,
        trained,
        loss_trace,
    };
    Ok((run, corpus, head))
}

/// A formatted before/after table, one row per run.
pub fn metrics_table(runs: &[SilhouetteRun]) -> String {
    let mut out = String::from("seed\tstage\tintra\tinter\tsilhouette\n");
    for r in runs {
        for (stage, m) in [("initial", &r.initial), ("trained", &r.trained)] {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                r.seed, stage, m.intra_similarity, m.inter_similarity, m.silhouette
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradkit::supcon_from_logits;

    fn orthogonal_classes(classes: usize, per: usize, dim: usize) -> (NumArray, Vec<usize>) {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..per {
                let mut v = vec![0.0; dim];
                v[c] = 1.0;
                data.extend(v);
                labels.push(c);
            }
        }
        (NumArray::matrix(classes * per, dim, data).unwrap(), labels)
    }

    #[test]
    fn degenerate_geometry_metrics() {
        let (x, labels) = orthogonal_classes(3, 4, 5);
        let m = metrics_of(&x, &labels).unwrap();
        assert!((m.intra_similarity - 1.0).abs() < 1e-12);
        assert!(m.inter_similarity.abs() < 1e-12);
        assert!((m.silhouette - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_undefined() {
        let (x, _) = orthogonal_classes(1, 4, 2);
        assert!(matches!(metrics_of(&x, &[0, 0, 0, 0]), Err(Error::UndefinedMetric(_))));
    }

    /// Silhouette computed directly from its definition with a full
    /// distance matrix.
    fn silhouette_oracle(x: &NumArray, labels: &[usize]) -> f64 {
        let n = x.rows();
        let unit: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let r = x.row(i);
                let s = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let dist = |i: usize, j: usize| 1.0 - dot(&unit[i], &unit[j]);
        let classes: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
        let mut total = 0.0;
        for i in 0..n {
            let mean_to = |c: usize| {
                let js: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == c).collect();
                js.iter().map(|&j| dist(i, j)).sum::<f64>() / js.len() as f64
            };
            let a = mean_to(labels[i]);
            let b = classes
                .iter()
                .filter(|&&c| c != labels[i])
                .map(|&c| mean_to(c))
                .fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn silhouette_matches_definition() {
        let cfg = CorpusConfig {
            per_class: 10,
            ..CorpusConfig::default()
        };
        let c = gen_risk_corpus(&cfg, 3).unwrap();
        let m = metrics_of(&c.embeddings, &c.labels).unwrap();
        let want = silhouette_oracle(&c.embeddings, &c.labels);
        assert!((m.silhouette - want).abs() < 1e-12, "{} vs {want}", m.silhouette);
        assert!((-1.0..=1.0).contains(&m.intra_similarity) && (-1.0..=1.0).contains(&m.inter_similarity));
    }

    #[test]
    fn no_separation_is_class_blind() {
        let cfg = CorpusConfig {
            separation: 0.0,
            per_class: 200,
            ..CorpusConfig::default()
        };
        let m = cluster_metrics(&gen_risk_corpus(&cfg, 1).unwrap(), None).unwrap();
        assert!(m.silhouette.abs() < 0.05, "{}", m.silhouette);
    }

    #[test]
    fn clean_separated_corpus_clusters() {
        let cfg = CorpusConfig {
            separation: 5.0,
            nuisance: 0.0,
            ..CorpusConfig::default()
        };
        let m = cluster_metrics(&gen_risk_corpus(&cfg, 1).unwrap(), None).unwrap();
        assert!(m.silhouette > 0.8, "{}", m.silhouette);
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = CorpusConfig::default();
        assert_eq!(gen_risk_corpus(&cfg, 5).unwrap(), gen_risk_corpus(&cfg, 5).unwrap());
        assert_ne!(gen_risk_corpus(&cfg, 5).unwrap(), gen_risk_corpus(&cfg, 6).unwrap());
    }

    #[test]
    fn invalid_corpus_rejected() {
        for cfg in [
            CorpusConfig {
                classes: 1,
                ..CorpusConfig::default()
            },
            CorpusConfig {
                per_class: 1,
                ..CorpusConfig::default()
            },
            CorpusConfig {
                separation: -1.0,
                ..CorpusConfig::default()
            },
            CorpusConfig {
                dim: 5,
                ..CorpusConfig::default()
            },
        ] {
            assert!(gen_risk_corpus(&cfg, 0).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn collapsed_classes_hit_the_analytic_loss() {
        let (classes, per, tau) = (4usize, 8usize, 0.05);
        let (x, labels) = orthogonal_classes(classes, per, 6);
        let (loss, g) = supcon_with_grad(&x, &labels, tau, Reduction::Mean).unwrap();
        let n = (classes * per) as f64;
        let m = per as f64;
        // Positives sit at logit 1/tau, negatives at 0, for every anchor.
        let want = ((m - 1.0) * (1.0 / tau).exp() + (n - m)).ln() - 1.0 / tau;
        assert!((loss - want).abs() < 1e-9, "{loss} vs {want}");
        let gnorm = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gnorm < 1e-6, "{gnorm}");
    }

    #[test]
    fn temperature_is_a_logit_rescaling() {
        let c = gen_risk_corpus(
            &CorpusConfig {
                per_class: 5,
                ..CorpusConfig::default()
            },
            2,
        )
        .unwrap();
        let z = normalized_rows(&c.embeddings).unwrap();
        let n = z.len();
        for tau in [0.05, 0.1, 0.5, 2.0] {
            let logits: Vec<f64> = (0..n)
                .flat_map(|i| z.iter().map(move |zk| (i, zk)))
                .map(|(i, zk)| dot(&z[i], zk) / tau)
                .collect();
            let via_logits = supcon_from_logits(&NumArray::matrix(n, n, logits).unwrap(), &c.labels).unwrap();
            let direct = crate::gradkit::loss_supcon(&c.embeddings, &c.labels, tau).unwrap();
            assert!((via_logits - direct).abs() < 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn loss_is_non_negative_and_zero_only_when_concentrated() {
        let c = gen_risk_corpus(
            &CorpusConfig {
                per_class: 6,
                ..CorpusConfig::default()
            },
            4,
        )
        .unwrap();
        assert!(crate::gradkit::loss_supcon(&c.embeddings, &c.labels, 0.1).unwrap() > 0.0);
        // One positive per anchor and antipodal negatives: softmax mass goes
        // to the positive as tau shrinks.
        let x = NumArray::matrix(4, 1, vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        let l = crate::gradkit::loss_supcon(&x, &[0, 0, 1, 1], 0.01).unwrap();
        assert!((0.0..1e-80).contains(&l), "{l}");
    }

    #[test]
    fn batches_are_stratified() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        for b in stratified_batches(&labels, 16, 3, 0).unwrap() {
            for c in 0..4 {
                assert!(b.iter().filter(|&&i| labels[i] == c).count() >= 2);
            }
        }
        assert!(matches!(
            stratified_batches(&[0, 1, 2], 4, 0, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_params_bit_exact() {
        let c = gen_risk_corpus(&CorpusConfig::default(), 0).unwrap();
        let cfg = ProjectionConfig {
            learning_rate: 0.0,
            epochs: 1,
            ..ProjectionConfig::default()
        };
        let mut head = cfg.build_head(c.dim()).unwrap();
        let before: Vec<u64> = head.params().iter().map(|v| v.to_bits()).collect();
        train_projection(&c, &mut head, &cfg).unwrap();
        let after: Vec<u64> = head.params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn renaming_labels_leaves_training_bit_identical() {
        let c = gen_risk_corpus(&CorpusConfig::default(), 1).unwrap();
        let perm = [2usize, 0, 3, 1];
        let renamed = RiskCorpus::new(
            c.embeddings.clone(),
            c.labels.iter().map(|&l| perm[l]).collect(),
            c.classes,
        )
        .unwrap();
        let cfg = ProjectionConfig {
            epochs: 3,
            ..ProjectionConfig::default()
        };
        let mut a = cfg.build_head(c.dim()).unwrap();
        let mut b = a.clone();
        let ta = train_projection(&c, &mut a, &cfg).unwrap();
        let tb = train_projection(&renamed, &mut b, &cfg).unwrap();
        let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ta), bits(&tb));
        assert_eq!(a, b);
    }

    #[test]
    fn training_lowers_loss_on_default_corpus() {
        let c = gen_risk_corpus(&CorpusConfig::default(), 7).unwrap();
        let cfg = ProjectionConfig {
            seed: 7,
            ..ProjectionConfig::default()
        };
        let mut head = cfg.build_head(c.dim()).unwrap();
        let trace = train_projection(&c, &mut head, &cfg).unwrap();
        assert!(trace.last().unwrap() < trace.first().unwrap(), "{trace:?}");
    }

    #[test]
    fn dump_has_one_row_per_point() {
        let c = gen_risk_corpus(&CorpusConfig::default(), 0).unwrap();
        let head = ProjectionConfig::default().build_head(c.dim()).unwrap();
        let rows = embedding_dump(&c, Some(&head)).unwrap();
        assert_eq!(rows.len(), c.len());
        assert!(rows.iter().all(|r| r.coords.len() == 8 && r.label == c.labels[r.id]));
    }
}
