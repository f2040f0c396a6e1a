//! Subcommand bodies. Each reads its declared inputs, computes every
//! output in memory and records the invariants it checked; nothing is
//! written until the whole run has succeeded.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cli::{
    AnnotateArgs, CurateArgs, EvalArgs, GrpoArgs, LabelArgs, ReportArgs, RiskArgs, SynthArgs, TheoryArgs, TrainArgs,
};
use super::config::LabConfig;
use super::run::{sig9, sig9_opt, Outcome, RunManifest, MANIFEST};
use crate::curation::MseRecord;
use crate::error::{Error, Result};
use crate::grpoloop::{grpo_experiment, GrpoOutcome};
use crate::labeling::AggregatedLabel;
use crate::rewardlab::{evaluate, prepare_from, train_kind, Dimension, EvalReport, Prepared, RewardKind, RewardNet};
use crate::riskclust::{embedding_dump, metrics_table, silhouette_fit, SilhouetteRun};
use crate::rng::stream;
use crate::synthworld::{annotate_world, gen_world, AnnotationBundle, SynthContext, SynthResponse, World, ROUNDS};
use crate::theorylab::{
    cov_mse_check, cov_mse_scaling, fisher, mc_orderings, pair_bound_check, pair_bound_samples, FrameworkStats,
    LinearFamily, PairBoundReport, Verdict,
};

pub const WORLD_FILE: &str = "world.json";
pub const CONTEXTS_FILE: &str = "contexts.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";

/// Generative part of a world; records travel in the JSONL files.
fn world_header(world: &World) -> World {
    World {
        contexts: Vec::new(),
        responses: Vec::new(),
        ..world.clone()
    }
}

fn load_world(o: &mut Outcome, dir: &Path) -> Result<World> {
    let mut world: World = o.read_json(&dir.join(WORLD_FILE))?;
    world.contexts = o.read_jsonl::<SynthContext>(&dir.join(CONTEXTS_FILE))?;
    world.responses = o.read_jsonl::<SynthResponse>(&dir.join(RESPONSES_FILE))?;
    Ok(world)
}

pub fn synth(a: &SynthArgs) -> Result<Outcome> {
    let cfg = LabConfig::load(a.common.config.as_deref())?;
    let mut o = Outcome::new(a.seed, cfg);
    let wc = &o.config.reward.world;
    let world = gen_world(wc, a.seed)?;
    let expected = wc.n_contexts * wc.responses_per_context;
    o.check(
        "response_count",
        world.responses.len() == expected,
        format!("{} responses, expected {expected}", world.responses.len()),
    );
    o.check(
        "ids_contiguous",
        world.responses.iter().enumerate().all(|(i, r)| r.id == i)
            && world.contexts.iter().enumerate().all(|(i, c)| c.id == i),
        "",
    );
    o.emit_json(WORLD_FILE, &world_header(&world));
    o.emit_jsonl(CONTEXTS_FILE, &world.contexts);
    o.emit_jsonl(RESPONSES_FILE, &world.responses);
    o.summary = format!("{} contexts, {} responses", world.contexts.len(), world.responses.len());
    Ok(o)
}

pub fn annotate(a: &AnnotateArgs) -> Result<Outcome> {
    let cfg = LabConfig::load(a.common.config.as_deref())?;
    let mut o = Outcome::new(0, cfg);
    let world = load_world(&mut o, &a.world)?;
    o.seed = world.seed;
    let bundles = annotate_world(&world, &o.config.reward.rater_noise, world.seed)?;
    o.check(
        "rounds_per_bundle",
        bundles.iter().all(|b| b.rounds.len() == ROUNDS),
        format!("{ROUNDS} rounds each"),
    );
    o.check(
        "ratings_in_range",
        bundles
            .iter()
            .flat_map(|b| &b.rounds)
            .all(|r| (-2..=2).contains(&r.help) && (-2..=2).contains(&r.harm)),
        "ratings within -2..2",
    );
    o.emit_jsonl("annotations.jsonl", &bundles);
    o.summary = format!("{} bundles", bundles.len());
    Ok(o)
}

pub fn label(a: &LabelArgs) -> Result<Outcome> {
    let cfg = LabConfig::load(a.common.config.as_deref())?;
    let mut o = Outcome::new(0, cfg);
    let world = load_world(&mut o, &a.world)?;
    o.seed = world.seed;
    let bundles: Vec<AnnotationBundle> = o.read_jsonl(&a.annotations)?;
    let labels = crate::labeling::aggregate_corpus(&bundles, &world.responses, &o.config.reward.adjust, world.seed)?;
    let on_segment = labels.iter().all(|l| {
        let (b, t, f) = (l.w_base, l.w_target, l.w_final);
        let sum_ok = (f.w_help + f.w_harm - 1.0).abs() <= 1e-12;
        let lo = b.w_help.min(t.w_help) - 1e-12;
        let hi = b.w_help.max(t.w_help) + 1e-12;
        sum_ok && (lo..=hi).contains(&f.w_help)
    });
    o.check(
        "w_final_on_segment",
        on_segment,
        "W_final between W_base and W_target, summing to 1",
    );
    o.check(
        "s_w_in_range",
        labels.iter().all(|l| (-2.0 - 1e-12..=2.0 + 1e-12).contains(&l.s_w)),
        "weighted scores within [-2, 2]",
    );
    o.emit_jsonl("labels.jsonl", &labels);
    o.summary = format!("{} labels", labels.len());
    Ok(o)
}

pub fn curate(a: &CurateArgs) -> Result<Outcome> {
    let mut cfg = LabConfig::load(a.common.config.as_deref())?;
    if let Some(f) = a.bt_frac {
        cfg.reward.split.bt_frac = f;
    }
    if let Some(p) = a.hard_negative_p {
        cfg.reward.hard_negative_p = p;
    }
    cfg.validate()?;
    let mut o = Outcome::new(0, cfg);
    let world = load_world(&mut o, &a.world)?;
    o.seed = world.seed;
    if world.config != o.config.reward.world {
        return Err(Error::InvalidConfig(
            "[reward.world] does not match the world being curated".into(),
        ));
    }
    let labels: Vec<AggregatedLabel> = o.read_jsonl(&a.labels)?;
    let prep = prepare_from(&o.config.reward, world, labels)?;
    let c = &prep.corpus;
    let split = o.config.reward.split.clone();
    let want_bt = (split.bt_frac * c.eligible as f64).floor() as usize;
    let delta_min = o.config.reward.delta_min;
    o.check(
        "bt_count",
        c.d_bt.len() == want_bt,
        format!("{} of {} eligible pairs, expected {want_bt}", c.d_bt.len(), c.eligible),
    );
    o.check(
        "bt_margin",
        c.d_bt.iter().all(|p| p.delta > delta_min),
        format!("every delta > {delta_min}"),
    );
    o.check(
        "mse_cell_cap",
        c.bins
            .iter()
            .all(|b| b.drawn <= split.per_bin && b.drawn == b.population.min(split.per_bin)),
        format!("at most {} per cell", split.per_bin),
    );
    let injected = prep.injected.iter().filter(|p| p.hard_negative).count();
    o.emit_jsonl("d_bt.jsonl", &prep.injected);
    o.emit_jsonl::<MseRecord>("d_mse.jsonl", &c.d_mse);
    o.emit_jsonl("bins.jsonl", &c.bins);
    o.emit_jsonl("templates.jsonl", &prep.train_templates);
    o.summary = format!(
        "{} eligible, {} BT pairs ({injected} hard negatives), {} MSE records, {} held-out pairs",
        c.eligible,
        c.d_bt.len(),
        c.d_mse.len(),
        prep.eval_pairs.len()
    );
    // Response records already live in the world's JSONL dump; the bundle
    // keeps only the standardized features.
    let slim = Prepared {
        world: World {
            responses: Vec::new(),
            ..prep.world.clone()
        },
        ..prep
    };
    o.emit_text(
        "prepared.json",
        serde_json::to_string(&slim).expect("prepared serializes") + "\n",
    );
    Ok(o)
}

fn load_prepared(o: &mut Outcome, path: &Path) -> Result<Prepared> {
    let prep: Prepared = o.read_json(path)?;
    if prep.world.config != o.config.reward.world {
        return Err(Error::InvalidConfig(format!(
            "[reward.world] does not match the world behind {}",
            path.display()
        )));
    }
    Ok(prep)
}

pub fn train_reward(a: &TrainArgs) -> Result<Outcome> {
    let mut cfg = LabConfig::load(a.common.config.as_deref())?;
    if let Some(l) = a.lambda {
        cfg.reward.train.lambda = l;
    }
    cfg.validate()?;
    let kind = RewardKind::from_name(&a.kind).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut o = Outcome::new(0, cfg);
    let prep = load_prepared(&mut o, &a.prepared)?;
    o.seed = prep.seed;
    let (net, trace) = train_kind(&o.config.reward, &prep, kind, !a.no_injection)?;
    o.check(
        "finite_loss",
        trace.stages.iter().flat_map(|s| &s.epoch_loss).all(|l| l.is_finite()),
        "",
    );
    let last: Vec<String> = trace
        .stages
        .iter()
        .map(|s| format!("{} {}", s.stage, sig9_opt(s.epoch_loss.last().copied())))
        .collect();
    o.emit_text(&format!("net-{}.txt", kind.name()), net.to_text());
    o.emit_json(&format!("trace-{}.json", kind.name()), &trace);
    o.summary = format!("{} trained; final loss {}", kind.name(), last.join(", "));
    Ok(o)
}

fn eval_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("kind\tdimension\tthreshold\tpairs\taccuracy\n");
    for r in reports {
        for c in &r.cells {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.kind.name(),
                c.dimension.name(),
                c.threshold,
                c.n_pairs,
                sig9_opt(c.accuracy)
            ));
        }
        s.push_str(&format!(
            "{}\thard_negative_pass_rate\t-\t-\t{}\n",
            r.kind.name(),
            sig9_opt(r.hard_negative_pass_rate)
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: Option<f64>,
}

pub fn eval_reward(a: &EvalArgs) -> Result<Outcome> {
    let cfg = LabConfig::load(a.common.config.as_deref())?;
    let mut o = Outcome::new(0, cfg);
    let prep = load_prepared(&mut o, &a.prepared)?;
    o.seed = prep.seed;
    let mut reports = Vec::new();
    for path in &a.net {
        let bytes = o.read_input(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let net = RewardNet::from_text(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        reports.push(evaluate(&o.config.reward, &prep, &net)?);
    }
    let in_unit = reports
        .iter()
        .flat_map(|r| r.cells.iter().filter_map(|c| c.accuracy))
        .all(|x| (0.0..=1.0).contains(&x));
    o.check("accuracy_in_unit_interval", in_unit, "");
    let plot: Vec<PlotPoint> = reports
        .iter()
        .flat_map(|r| {
            r.cells.iter().map(move |c| PlotPoint {
                series: format!("{}/{}", r.kind.name(), c.dimension.name()),
                x: c.threshold,
                y: c.accuracy,
            })
        })
        .collect();
    let table = eval_table(&reports);
    o.summary = table.clone();
    o.emit_json("eval.json", &reports);
    o.emit_text("eval_table.tsv", table);
    o.emit_jsonl("accuracy_plot.jsonl", &plot);
    Ok(o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub seed: u64,
    pub replicates: usize,
    pub singular: usize,
    pub stats: Vec<FrameworkStats>,
    pub win_rate_mse_vs_single: f64,
    pub win_rate_mse_vs_seq: f64,
    pub win_rate_pref_vs_single: f64,
    pub win_rate_pref_vs_seq: f64,
    pub verdict: Verdict,
    pub crlb_single: Option<f64>,
    pub crlb_par: Option<f64>,
    pub fisher_identity_residual: f64,
    pub fisher_gain_min_eigenvalue: f64,
    pub pair_bound: PairBoundReport,
    pub cov_mse_median_relative_gap: f64,
    pub cov_mse_scaling_predicted: f64,
    pub cov_mse_scaling_empirical: f64,
}

impl TheorySummary {
    pub fn table(&self) -> String {
        let mut s = String::from("quantity\tvalue\n");
        for st in &self.stats {
            s.push_str(&format!("mse_{}\t{}\n", st.framework.name(), sig9(st.mse_mean)));
            s.push_str(&format!("pref_{}\t{}\n", st.framework.name(), sig9(st.pref_mean)));
        }
        let rows = [
            ("win_rate_mse_vs_single", self.win_rate_mse_vs_single),
            ("win_rate_mse_vs_seq", self.win_rate_mse_vs_seq),
            ("win_rate_pref_vs_single", self.win_rate_pref_vs_single),
            ("win_rate_pref_vs_seq", self.win_rate_pref_vs_seq),
            ("fisher_identity_residual", self.fisher_identity_residual),
            ("fisher_gain_min_eigenvalue", self.fisher_gain_min_eigenvalue),
            ("pair_bound_max_violation", self.pair_bound.max_violation),
            ("cov_mse_median_relative_gap", self.cov_mse_median_relative_gap),
            ("cov_mse_scaling_predicted", self.cov_mse_scaling_predicted),
            ("cov_mse_scaling_empirical", self.cov_mse_scaling_empirical),
        ];
        for (k, v) in rows {
            s.push_str(&format!("{k}\t{}\n", sig9(v)));
        }
        s.push_str(&format!("crlb_single\t{}\n", sig9_opt(self.crlb_single)));
        s.push_str(&format!("crlb_par\t{}\n", sig9_opt(self.crlb_par)));
        s.push_str(&format!("pair_bound_violations\t{}\n", self.pair_bound.violations));
        s.push_str(&format!("verdict\tarchitecture-ordering\t{}\n", self.verdict.label()));
        s
    }
}

pub fn theory(a: &TheoryArgs) -> Result<Outcome> {
    let mut cfg = LabConfig::load(a.common.config.as_deref())?;
    if let Some(r) = a.replicates {
        cfg.theory.mc.replicates = r;
    }
    cfg.validate()?;
    let mut o = Outcome::new(a.seed, cfg);
    let t = &o.config.theory;
    let family = LinearFamily::generate(&t.family, a.seed)?;
    let mc = mc_orderings(&family, &t.mc, a.seed)?;
    let fs = fisher(&family, t.fisher_n, a.seed, true)?;
    let quads = pair_bound_samples(t.pair_bound_samples, a.seed);
    let l1 = pair_bound_check(&quads, t.pair_bound_slack)?;
    let fam2 = LinearFamily::generate(&t.cov_mse_family, a.seed)?;
    let probes: DMatrix<f64> = fam2.draw_covariates(t.cov_mse_probes, &mut stream(a.seed, "harness/probes", 0));
    let l2 = cov_mse_check(&fam2, t.cov_mse_n, t.cov_mse_replicates, &probes, a.seed)?;
    let (sp, se) = cov_mse_scaling(&fam2, t.cov_mse_n, t.cov_mse_replicates, &probes, a.seed)?;
    let summary = TheorySummary {
        seed: a.seed,
        replicates: t.mc.replicates,
        singular: mc.singular,
        stats: mc.stats.clone(),
        win_rate_mse_vs_single: mc.win_rate_mse_vs_single(),
        win_rate_mse_vs_seq: mc.win_rate_mse_vs_seq(),
        win_rate_pref_vs_single: mc.win_rate_pref_vs_single(),
        win_rate_pref_vs_seq: mc.win_rate_pref_vs_seq(),
        verdict: mc.verdict(),
        crlb_single: mc.crlb.0,
        crlb_par: mc.crlb.1,
        fisher_identity_residual: fs.identity_residual(),
        fisher_gain_min_eigenvalue: fs.gain_min_eigenvalue(),
        pair_bound: l1,
        cov_mse_median_relative_gap: l2.median_relative_gap,
        cov_mse_scaling_predicted: sp,
        cov_mse_scaling_empirical: se,
    };
    o.check(
        "fisher_identity",
        summary.fisher_identity_residual <= 1e-10,
        format!("residual {}", sig9(summary.fisher_identity_residual)),
    );
    o.check(
        "pair_bound_bound",
        summary.pair_bound.violations == 0,
        format!("{} violations", summary.pair_bound.violations),
    );
    let table = summary.table();
    o.summary = table.clone();
    o.emit_json("theory.json", &summary);
    o.emit_text("theory_table.tsv", table);
    o.emit_jsonl("replicates.jsonl", &mc.replicates);
    Ok(o)
}

pub fn riskclust(a: &RiskArgs) -> Result<Outcome> {
    let cfg = LabConfig::load(a.common.config.as_deref())?;
    let mut o = Outcome::new(a.seed, cfg);
    let rc = &o.config.riskclust;
    let (run, corpus, head) = silhouette_fit(&rc.corpus, &rc.projection, a.seed)?;
    o.check("loss_finite", run.loss_trace.iter().all(|l| l.is_finite()), "");
    let initial = embedding_dump(&corpus, None)?;
    let trained = embedding_dump(&corpus, Some(&head))?;
    let table = metrics_table(std::slice::from_ref(&run));
    o.summary = format!("{table}silhouette gain {}", sig9(run.gain()));
    o.emit_json("riskclust.json", &run);
    o.emit_text("metrics.tsv", table);
    o.emit_jsonl("embeddings_initial.jsonl", &initial);
    o.emit_jsonl("embeddings_trained.jsonl", &trained);
    o.emit_text("head.txt", crate::gradkit::serial::to_text(&head));
    Ok(o)
}

pub fn grpo(a: &GrpoArgs) -> Result<Outcome> {
    let cfg = LabConfig::load(a.common.config.as_deref())?;
    let mut o = Outcome::new(a.seed, cfg);
    let out = grpo_experiment(&o.config.grpo, a.seed)?;
    o.check(
        "diagnostics_finite",
        out.records
            .iter()
            .all(|r| r.mean_reward.is_finite() && r.kl.is_finite()),
        "",
    );
    o.summary = format!(
        "reward {} -> {}; extreme-regime arbitration {} / {} -> {} / {}; KL {}",
        sig9(out.start_reward),
        sig9(out.end_reward),
        sig9_opt(out.start_arbitration.rate(0)),
        sig9_opt(out.start_arbitration.rate(4)),
        sig9_opt(out.end_arbitration.rate(0)),
        sig9_opt(out.end_arbitration.rate(4)),
        sig9(out.final_kl)
    );
    o.emit_jsonl("diagnostics.jsonl", &out.records);
    o.emit_json("grpo.json", &out);
    Ok(o)
}

/// Ordering verdict on mean weighted accuracy at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub threshold: f64,
    pub single: Option<f64>,
    pub sequential: Option<f64>,
    pub parallel: Option<f64>,
    /// `HOLDS` (both gaps at least `min_gap`), `ORDERED` (strict order,
    /// smaller gaps) or `FAILS`.
    pub verdict: String,
}

pub const MIN_ORDERING_GAP: f64 = 0.02;

pub fn ordering_verdict(single: Option<f64>, sequential: Option<f64>, parallel: Option<f64>) -> &'static str {
    match (single, sequential, parallel) {
        (Some(si), Some(se), Some(p)) if p - se >= MIN_ORDERING_GAP && se - si >= MIN_ORDERING_GAP => "HOLDS",
        (Some(si), Some(se), Some(p)) if p > se && se > si => "ORDERED",
        _ => "FAILS",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub runs: Vec<String>,
    pub reward_seeds: Vec<u64>,
    pub orderings: Vec<OrderingRow>,
    /// `(kind, threshold) -> mean weighted accuracy`.
    pub weighted_accuracy: Vec<(String, f64, Option<f64>)>,
    pub hard_negative_pass_rate: Vec<(String, Option<f64>)>,
    pub theory: Vec<TheorySummary>,
    pub riskclust: Vec<SilhouetteRun>,
    pub grpo: Vec<GrpoOutcome>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl Report {
    pub fn table(&self) -> String {
        let mut s = String::new();
        if !self.orderings.is_empty() {
            s.push_str("# reward architectures (mean weighted accuracy over seeds)\n");
            s.push_str("kind\tthreshold\taccuracy\n");
            for (k, t, a) in &self.weighted_accuracy {
                s.push_str(&format!("{k}\t{t}\t{}\n", sig9_opt(*a)));
            }
            for (k, a) in &self.hard_negative_pass_rate {
                s.push_str(&format!("{k}\thard_negative_pass_rate\t{}\n", sig9_opt(*a)));
            }
            for row in &self.orderings {
                s.push_str(&format!(
                    "verdict\tparallel>sequential>single@{}\t{}\tgaps {} / {}\n",
                    row.threshold,
                    row.verdict,
                    sig9_opt(row.parallel.zip(row.sequential).map(|(p, q)| p - q)),
                    sig9_opt(row.sequential.zip(row.single).map(|(p, q)| p - q)),
                ));
            }
        }
        for t in &self.theory {
            s.push_str(&format!(
                "verdict\tarchitecture-ordering\t{}\tseed {}\twin rates mse {} / {} pref {} / {}\n",
                t.verdict.label(),
                t.seed,
                sig9(t.win_rate_mse_vs_single),
                sig9(t.win_rate_mse_vs_seq),
                sig9(t.win_rate_pref_vs_single),
                sig9(t.win_rate_pref_vs_seq)
            ));
        }
        for r in &self.riskclust {
            s.push_str(&format!(
                "riskclust\tseed {}\tsilhouette {} -> {}\n",
                r.seed,
                sig9(r.initial.silhouette),
                sig9(r.trained.silhouette)
            ));
        }
        for g in &self.grpo {
            s.push_str(&format!(
                "grpo\tseed {}\treward {} -> {}\tarbitration {} / {}\n",
                g.seed,
                sig9(g.start_reward),
                sig9(g.end_reward),
                sig9_opt(g.end_arbitration.rate(0)),
                sig9_opt(g.end_arbitration.rate(4))
            ));
        }
        s
    }
}

pub fn report(a: &ReportArgs) -> Result<Outcome> {
    let mut o = Outcome::new(0, LabConfig::default());
    let mut rep = Report::default();
    let mut evals: Vec<(u64, Vec<EvalReport>)> = Vec::new();
    for dir in &a.run {
        let manifest: RunManifest = o.read_json(&dir.join(MANIFEST))?;
        rep.runs.push(format!("{} {}", manifest.command, manifest.run_id));
        match manifest.command.as_str() {
            "eval-reward" => evals.push((manifest.seed, o.read_json(&dir.join("eval.json"))?)),
            "theory" => rep.theory.push(o.read_json(&dir.join("theory.json"))?),
            "riskclust" => rep.riskclust.push(o.read_json(&dir.join("riskclust.json"))?),
            "grpo" => rep.grpo.push(o.read_json(&dir.join("grpo.json"))?),
            _ => {}
        }
    }
    if !evals.is_empty() {
        rep.reward_seeds = evals.iter().map(|(s, _)| *s).collect();
        let mut acc: BTreeMap<(RewardKind, u64), Vec<f64>> = BTreeMap::new();
        let mut hn: BTreeMap<RewardKind, Vec<f64>> = BTreeMap::new();
        for (_, reports) in &evals {
            for r in reports {
                for c in r.cells.iter().filter(|c| c.dimension == Dimension::Weighted) {
                    if let Some(x) = c.accuracy {
                        acc.entry((r.kind, c.threshold.to_bits())).or_default().push(x);
                    }
                }
                if let Some(x) = r.hard_negative_pass_rate {
                    hn.entry(r.kind).or_default().push(x);
                }
            }
        }
        let mut thresholds: Vec<f64> = acc.keys().map(|(_, t)| f64::from_bits(*t)).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let get = |k: RewardKind, t: f64| acc.get(&(k, t.to_bits())).and_then(|v| mean(v));
        for &k in &RewardKind::ALL {
            for &t in &thresholds {
                rep.weighted_accuracy.push((k.name().to_string(), t, get(k, t)));
            }
            rep.hard_negative_pass_rate
                .push((k.name().to_string(), hn.get(&k).and_then(|v| mean(v))));
        }
        for &t in &thresholds {
            let (si, se, p) = (
                get(RewardKind::Single, t),
                get(RewardKind::Sequential, t),
                get(RewardKind::Parallel, t),
            );
            rep.orderings.push(OrderingRow {
                threshold: t,
                single: si,
                sequential: se,
                parallel: p,
                verdict: ordering_verdict(si, se, p).to_string(),
            });
        }
    }
    let table = rep.table();
    o.summary = table.clone();
    o.emit_json("report.json", &rep);
    o.emit_text("report.tsv", table);
    Ok(o)
}
