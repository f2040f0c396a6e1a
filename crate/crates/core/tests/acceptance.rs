//! One test per acceptance criterion. Each writes a single PASS/FAIL line
//! to stderr (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use arblab::curation::{
    inject_hard_negatives, mine_pairs, split_bt_mse, HackTemplate, InjectionMode, PreferencePair, SplitConfig,
};
use arblab::gradkit::{
    grad_check, loss_bt, loss_bt_grad, loss_joint, loss_joint_grad, loss_supcon, supcon_with_grad, Activation, Mlp,
    NumArray, Reduction, ScoredPair, ScoredTarget,
};
use arblab::grpoloop::{group_advantage, grpo_experiment, GrpoPipeline};
use arblab::harness::config::TheoryConfig;
use arblab::labeling::{
    aggregate_corpus, draw_step, select_target, AdjustParams, AggregatedLabel, StepMode, WeightVector,
    CANONICAL_WEIGHTS,
};
use arblab::rewardlab::{
    compare_architectures, hard_negative_robustness, mean_over_seeds, prepare, train_and_eval, Dimension, EvalReport,
    ExperimentConfig, RewardKind,
};
use arblab::riskclust::{silhouette_run, CorpusConfig, ProjectionConfig};
use arblab::rng::{seeded, stream};
use arblab::synthworld::{annotate_world, gen_world, ContextRegime, RaterNoise, SynthResponse, WorldConfig};
use arblab::theorylab::{
    cov_mse_check, cov_mse_scaling, fisher, mc_orderings, pair_bound_check, pair_bound_samples, LinearFamily,
};
use rand::Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn verdict(n: usize, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{tag} criterion {n:>2}: {detail}");
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

#[test]
fn criterion_01_architecture_ordering() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let results = compare_architectures(&cfg, &SEEDS).unwrap();
    let elapsed = start.elapsed();
    let mean = |kind: RewardKind, dim: Dimension, t: f64| {
        mean_over_seeds(&results, |r| r.report(kind).and_then(|e| e.accuracy(dim, t)))
    };
    let acc = |kind| mean(kind, Dimension::Weighted, 2.0).unwrap();
    let (par, seq, single) = (
        acc(RewardKind::Parallel),
        acc(RewardKind::Sequential),
        acc(RewardKind::Single),
    );
    let min_pairs = results.iter().map(|r| r.n_eval_pairs).min().unwrap();
    let ordered = par - seq >= 0.02 && seq - single >= 0.02;
    let mut monotone = true;
    for kind in RewardKind::ALL {
        for dim in [Dimension::Help, Dimension::Harm, Dimension::Weighted] {
            if let (Some(a2), Some(a4)) = (mean(kind, dim, 2.0), mean(kind, dim, 4.0)) {
                monotone &= a4 >= a2 - 0.02;
            }
        }
    }
    let passed = ordered && monotone && min_pairs >= 2000 && within(elapsed, 300);
    verdict(
        1,
        passed,
        &format!(
            "weighted acc at delta>=2 parallel {par:.4} sequential {seq:.4} single {single:.4} \
             (gaps {:+.4}, {:+.4}; need >= 0.02 each); delta-monotone {monotone}; \
             min held-out pairs {min_pairs}; {:.1}s",
            par - seq,
            seq - single,
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_02_estimator_ordering_and_fisher_identity() {
    let start = Instant::now();
    let t = TheoryConfig::default();
    let family = LinearFamily::generate(&t.family, 0).unwrap();
    let mc = mc_orderings(&family, &t.mc, 0).unwrap();
    let fs = fisher(&family, t.fisher_n, 0, true).unwrap();
    let elapsed = start.elapsed();
    let rates = [
        mc.win_rate_mse_vs_single(),
        mc.win_rate_mse_vs_seq(),
        mc.win_rate_pref_vs_single(),
        mc.win_rate_pref_vs_seq(),
    ];
    let residual = fs.identity_residual();
    let gain = fs.gain_min_eigenvalue();
    let passed = t.mc.replicates == 200
        && rates[0] >= 0.95
        && rates[1] >= 0.90
        && rates[2] >= 0.95
        && rates[3] >= 0.90
        && residual <= 1e-10
        && gain > 0.0
        && within(elapsed, 120);
    verdict(
        2,
        passed,
        &format!(
            "win rates over {} replicates: mse vs single {:.3}, vs seq {:.3}; pref vs single {:.3}, vs seq {:.3}; \
             fisher residual {residual:.2e}; gain min eigenvalue {gain:.4e}; {:.1}s",
            t.mc.replicates,
            rates[0],
            rates[1],
            rates[2],
            rates[3],
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_03_pairwise_error_bound() {
    let start = Instant::now();
    let quads = pair_bound_samples(100_000, 0);
    let report = pair_bound_check(&quads, 1e-12).unwrap();
    let elapsed = start.elapsed();
    let passed = report.count == 100_000 && report.violations == 0 && within(elapsed, 10);
    verdict(
        3,
        passed,
        &format!(
            "{} quadruples, {} violations beyond 1e-12, max excess {:.3e}; {:.2}s",
            report.count,
            report.violations,
            report.max_violation,
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_04_covariance_mse_approximation() {
    let start = Instant::now();
    let t = TheoryConfig::default();
    let family = LinearFamily::generate(&t.cov_mse_family, 0).unwrap();
    let probes = family.draw_covariates(t.cov_mse_probes, &mut stream(0, "harness/probes", 0));
    let report = cov_mse_check(&family, 500, 1000, &probes, 0).unwrap();
    let (pred, emp) = cov_mse_scaling(&family, 500, 1000, &probes, 0).unwrap();
    let elapsed = start.elapsed();
    let in_band = |x: f64| (1.7..=2.3).contains(&x);
    let passed =
        family.dim() == 2 && report.median_relative_gap < 0.15 && in_band(pred) && in_band(emp) && within(elapsed, 120);
    verdict(
        4,
        passed,
        &format!(
            "median relative gap {:.4} (< 0.15) at n=500 x 1000 replicates; doubling-n ratios predicted {pred:.3}, \
             empirical {emp:.3}; {:.1}s",
            report.median_relative_gap,
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

/// The target table written out independently of the implementation.
fn expected_target(base: usize, help_noisier: bool) -> WeightVector {
    let w = |h, s| WeightVector { w_help: h, w_harm: s };
    match (base, help_noisier) {
        (0 | 1, false) => w(1.0, 0.0),
        (0 | 1, true) => w(0.5, 0.5),
        (2, _) => w(0.5, 0.5),
        (3 | 4, false) => w(0.5, 0.5),
        (3 | 4, true) => w(0.0, 1.0),
        _ => unreachable!(),
    }
}

fn clipped_folded_mean(sigma: f64) -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let density = |x: f64| 2.0 * (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let simpson = |f: &dyn Fn(f64) -> f64| {
        let inner: f64 = (1..n)
            .map(|i| f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
            .sum();
        (f(0.0) + f(1.0) + inner) * h / 3.0
    };
    simpson(&|x| x * density(x)) + 1.0 - simpson(&density)
}

#[test]
fn criterion_05_weight_adjustment() {
    let mut mismatches = 0;
    for (b, &base) in CANONICAL_WEIGHTS.iter().enumerate() {
        for help_noisier in [false, true] {
            let (vh, vs) = if help_noisier { (0.8, 0.2) } else { (0.2, 0.8) };
            if select_target(base, vh, vs) != expected_target(b, help_noisier) {
                mismatches += 1;
            }
        }
    }
    let world = gen_world(&WorldConfig::default(), 7).unwrap();
    let bundles = annotate_world(&world, &RaterNoise::default(), 7).unwrap();
    let labels = aggregate_corpus(&bundles, &world.responses, &AdjustParams::default(), 7).unwrap();
    let mut worst = 0.0f64;
    for l in &labels {
        let (b, t, f) = (l.w_base, l.w_target, l.w_final);
        worst = worst.max((f.w_help + f.w_harm - 1.0).abs());
        worst = worst.max((f.w_help - (b.w_help + l.alpha * (t.w_help - b.w_help))).abs());
        worst = worst.max((f.w_harm - (b.w_harm + l.alpha * (t.w_harm - b.w_harm))).abs());
        if !(0.0..=1.0).contains(&l.alpha) {
            worst = f64::INFINITY;
        }
    }
    let mut rng = stream(5, "acceptance/alpha", 0);
    let n = 1_000_000;
    let mean = (0..n)
        .map(|_| draw_step(0.25, StepMode::Folded, &mut rng).unwrap())
        .sum::<f64>()
        / n as f64;
    let oracle = clipped_folded_mean(0.25);
    let passed = mismatches == 0 && worst <= 1e-12 && (mean - oracle).abs() <= 0.002;
    verdict(
        5,
        passed,
        &format!(
            "{mismatches}/10 target mismatches; worst segment/simplex error {worst:.2e} over {} labels; \
             step mean {mean:.5} vs quadrature {oracle:.5}",
            labels.len()
        ),
    );
    assert!(passed);
}

fn supcon_grad_error() -> f64 {
    let mut rng = seeded(5);
    let z: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = [0, 1, 0, 1];
    let f = |p: &NumArray| {
        let (v, g) = supcon_with_grad(
            &NumArray::matrix(4, 3, p.data().to_vec())?,
            &labels,
            0.1,
            Reduction::Sum,
        )?;
        Ok((v, NumArray::vector(g.into_data())))
    };
    grad_check(f, &NumArray::vector(z), 1e-5).unwrap().max_rel_error
}

#[test]
fn criterion_06_contrastive_clustering() {
    let start = Instant::now();
    let grad_err = supcon_grad_error();
    let same = NumArray::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let diff = NumArray::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let three = NumArray::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let examples = [
        (loss_supcon(&same, &[0, 0], 0.5).unwrap(), 0.0),
        (loss_supcon(&diff, &[0, 1], 0.5).unwrap(), 0.0),
        (
            loss_supcon(&three, &[0, 0, 1], 1.0).unwrap(),
            2.0 * (1.0 + (-1.0f64).exp()).ln(),
        ),
    ];
    let examples_ok =
        examples.iter().all(|(got, want)| (got - want).abs() <= 1e-9) && (examples[2].1 - 0.6265).abs() < 1e-4;
    let corpus = CorpusConfig::default();
    let proj = ProjectionConfig::default();
    let gains: Vec<f64> = SEEDS
        .iter()
        .map(|&s| silhouette_run(&corpus, &proj, s).unwrap().gain())
        .collect();
    let elapsed = start.elapsed();
    let mut sweep = String::new();
    for tau in [0.05, 0.1, 0.5] {
        let p = ProjectionConfig {
            temperature: tau,
            ..proj.clone()
        };
        let g: Vec<String> = SEEDS
            .iter()
            .map(|&s| format!("{:.3}", silhouette_run(&corpus, &p, s).unwrap().gain()))
            .collect();
        sweep.push_str(&format!(" tau {tau}: [{}]", g.join(" ")));
    }
    let passed = grad_err < 1e-5 && examples_ok && gains.iter().all(|&g| g >= 0.2) && within(elapsed, 60);
    let g: Vec<String> = gains.iter().map(|g| format!("{g:.3}")).collect();
    verdict(
        6,
        passed,
        &format!(
            "grad rel error {grad_err:.2e}; examples {:.1e} {:.1e} {:.10}; silhouette gains [{}] (need >= 0.2); \
             {:.1}s; sweep{sweep}",
            examples[0].0,
            examples[1].0,
            examples[2].0,
            g.join(" "),
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_joint_loss() {
    let mut rng = seeded(17);
    let mut affine_err = 0.0f64;
    for _ in 0..200 {
        let pairs: Vec<ScoredPair> = (0..5)
            .map(|_| ScoredPair {
                chosen: rng.random_range(-3.0..3.0),
                rejected: rng.random_range(-3.0..3.0),
            })
            .collect();
        let targets: Vec<ScoredTarget> = (0..4)
            .map(|_| ScoredTarget {
                pred: (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                target: (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
            })
            .collect();
        let lambda: f64 = rng.random();
        let v0 = loss_joint(&pairs, &targets, 0.0).unwrap();
        let v1 = loss_joint(&pairs, &targets, 1.0).unwrap();
        let v = loss_joint(&pairs, &targets, lambda).unwrap();
        affine_err = affine_err.max((v - ((1.0 - lambda) * v0 + lambda * v1)).abs());
    }
    let ln2 = std::f64::consts::LN_2;
    let tie = [ScoredPair {
        chosen: 1.0,
        rejected: 1.0,
    }];
    let unit = [ScoredTarget {
        pred: vec![1.0, 0.0],
        target: vec![0.0, 0.0],
    }];
    let bt_tie = loss_bt(0.3, 0.3);
    let composed = loss_joint(&tie, &unit, 0.5).unwrap();
    let closed_ok = (bt_tie - ln2).abs() <= 1e-9
        && (composed - (0.5 * ln2 + 0.5)).abs() <= 1e-9
        && (composed - 0.8466).abs() < 1e-4;

    // Gradients of the joint loss composed with a tanh network.
    let widths = [4, 6, 3];
    let x = NumArray::matrix(8, 4, (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let net = Mlp::new(&widths, Activation::Tanh, &mut rng).unwrap();
    let f = |p: &NumArray| {
        let n = Mlp::from_params(&widths, Activation::Tanh, p.data().to_vec())?;
        let tr = n.forward_trace(&x)?;
        let out = tr.output();
        let pairs: Vec<ScoredPair> = (0..2)
            .map(|i| ScoredPair {
                chosen: out[2 * i * 3],
                rejected: out[(2 * i + 1) * 3],
            })
            .collect();
        let targets: Vec<ScoredTarget> = (4..8)
            .map(|r| ScoredTarget {
                pred: out[r * 3..r * 3 + 3].to_vec(),
                target: vec![0.5, -1.0, 0.2],
            })
            .collect();
        let (v, jg) = loss_joint_grad(&pairs, &targets, 0.4)?;
        let mut g = vec![0.0; out.len()];
        for (i, (gc, gr)) in jg.pairs.iter().enumerate() {
            g[2 * i * 3] += gc;
            g[(2 * i + 1) * 3] += gr;
        }
        for (i, gt) in jg.targets.iter().enumerate() {
            g[(4 + i) * 3..(5 + i) * 3].copy_from_slice(gt);
        }
        Ok((v, NumArray::vector(n.backward(&tr, &g)?.0)))
    };
    let joint_err = grad_check(f, &NumArray::vector(net.params().to_vec()), 1e-5)
        .unwrap()
        .max_rel_error;
    let bt_err = {
        let f = |p: &NumArray| {
            let (v, gc, gr) = loss_bt_grad(p.data()[0], p.data()[1]);
            Ok((v, NumArray::vector(vec![gc, gr])))
        };
        grad_check(f, &NumArray::vector(vec![0.7, -1.3]), 1e-5)
            .unwrap()
            .max_rel_error
    };
    let passed = affine_err <= 1e-12 && closed_ok && joint_err < 1e-5 && bt_err < 1e-5;
    verdict(
        7,
        passed,
        &format!(
            "affine-in-lambda max error {affine_err:.2e}; bt tie {bt_tie:.10}; composition {composed:.10}; \
             grad rel error joint-through-net {joint_err:.2e}, bt {bt_err:.2e}"
        ),
    );
    assert!(passed);
}

fn flat_label(id: usize, s_w: f64) -> AggregatedLabel {
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
        w_final: CANONICAL_WEIGHTS[2],
        s_w,
    }
}

fn flat_response(id: usize, context_id: usize) -> SynthResponse {
    SynthResponse {
        id,
        context_id,
        regime: ContextRegime(2),
        s_help: 0.0,
        s_harm: 0.0,
        length: 40 + (id as u32 * 7) % 300,
        category: (id % 4) as u8,
        feature: vec![0.0; 3],
    }
}

#[test]
fn criterion_08_curation() {
    // 100 contexts, each with one eligible pair.
    let labels: Vec<AggregatedLabel> = (0..200)
        .map(|i| flat_label(i, if i % 2 == 0 { 2.0 } else { -2.0 }))
        .collect();
    let responses: Vec<SynthResponse> = (0..200).map(|i| flat_response(i, i / 2)).collect();
    let eligible = mine_pairs(&labels, &responses, 3.6).unwrap();
    let split = SplitConfig {
        bt_frac: 0.85,
        ..SplitConfig::default()
    };
    let corpus = split_bt_mse(&eligible, &labels, &responses, &split, 3).unwrap();

    let edge_labels = vec![flat_label(0, 1.8), flat_label(1, -1.8)];
    let edge_resp = vec![flat_response(0, 0), flat_response(1, 0)];
    let boundary = mine_pairs(&edge_labels, &edge_resp, 3.6).unwrap();

    let pairs: Vec<PreferencePair> = (0..10_000)
        .map(|i| PreferencePair {
            context_id: i,
            chosen_id: 2 * i,
            rejected_id: 2 * i + 1,
            delta: 4.0,
            hard_negative: false,
            template_id: None,
        })
        .collect();
    let pool = [HackTemplate {
        id: 0,
        feature: vec![1.0; 3],
        target: [-2.0, -2.0, -2.0],
    }];
    let injected = inject_hard_negatives(&pairs, 0.10, &pool, InjectionMode::Bernoulli, 7).unwrap();
    let flagged = injected.iter().filter(|p| p.hard_negative).count() as f64;
    let sd = (10_000.0f64 * 0.1 * 0.9).sqrt();

    let world = gen_world(&WorldConfig::default(), 7).unwrap();
    let bundles = annotate_world(&world, &RaterNoise::default(), 7).unwrap();
    let wl = aggregate_corpus(&bundles, &world.responses, &AdjustParams::default(), 7).unwrap();
    let we = mine_pairs(&wl, &world.responses, 3.6).unwrap();
    let wc = split_bt_mse(&we, &wl, &world.responses, &SplitConfig::default(), 7).unwrap();
    let per_bin = SplitConfig::default().per_bin;
    let cap_ok = wc
        .bins
        .iter()
        .all(|b| b.drawn <= per_bin && b.drawn == b.population.min(per_bin));

    let passed = eligible.len() == 100
        && corpus.d_bt.len() == 85
        && boundary.is_empty()
        && (flagged - 1000.0).abs() <= 3.0 * sd
        && cap_ok;
    verdict(
        8,
        passed,
        &format!(
            "{} eligible -> {} ranking pairs; pairs at delta 3.6: {}; hard negatives {flagged} (1000 +- {:.0}); \
             {} cells, cap {per_bin} respected {cap_ok}",
            eligible.len(),
            corpus.d_bt.len(),
            boundary.len(),
            3.0 * sd,
            wc.bins.len()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_09_policy_optimization() {
    let start = Instant::now();
    let pipeline = GrpoPipeline::default();
    let zero = group_advantage(&[0.37; 32], pipeline.grpo.adv_epsilon).unwrap();
    let zero_ok = zero.iter().all(|&a| a == 0.0);
    let mut improved = 0;
    let mut arbitrates = 0;
    let mut near_chance = 0;
    let mut rows = Vec::new();
    for &s in &SEEDS {
        let o = grpo_experiment(&pipeline, s).unwrap();
        let end = (o.end_arbitration.rate(0).unwrap(), o.end_arbitration.rate(4).unwrap());
        let begin = (
            o.start_arbitration.rate(0).unwrap(),
            o.start_arbitration.rate(4).unwrap(),
        );
        improved += usize::from(o.end_reward > o.start_reward);
        arbitrates += usize::from(end.0 >= 0.8 && end.1 >= 0.8);
        near_chance += usize::from((begin.0 - 0.5).abs() <= 0.1 && (begin.1 - 0.5).abs() <= 0.1);
        rows.push(format!(
            "seed {s}: reward {:.3}->{:.3}, extremes {:.2}/{:.2} -> {:.2}/{:.2}",
            o.start_reward, o.end_reward, begin.0, begin.1, end.0, end.1
        ));
    }
    let elapsed = start.elapsed();
    let passed = zero_ok && improved == 5 && arbitrates == 5 && near_chance == 5 && within(elapsed, 300);
    verdict(
        9,
        passed,
        &format!(
            "reward up {improved}/5, extreme-regime arbitration >= 0.8 {arbitrates}/5, untrained within 0.5 +- 0.1 \
             {near_chance}/5, zero-variance advantages exact {zero_ok}; {:.1}s; {}",
            elapsed.as_secs_f64(),
            rows.join("; ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_hard_negative_robustness() {
    let results = hard_negative_robustness(&ExperimentConfig::default(), &SEEDS).unwrap();
    let mut ok = 0;
    let mut rows = Vec::new();
    for r in &results {
        let (w, wo) = (r.with_injection.unwrap(), r.without_injection.unwrap());
        ok += usize::from(w >= 0.9 && wo < w);
        rows.push(format!("seed {}: {w:.3} vs {wo:.3}", r.seed));
    }
    let passed = ok == SEEDS.len();
    verdict(
        10,
        passed,
        &format!(
            "with >= 0.9 and without strictly lower on {ok}/5 seeds ({})",
            rows.join(", ")
        ),
    );
    assert!(passed);
}

fn arblab(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_arblab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (out.status.code().unwrap_or(-1), text)
}

#[test]
fn criterion_11_replay_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("synth", vec!["synth", "--out", "world"]),
        ("annotate", vec!["annotate", "--world", "world", "--out", "ann"]),
        (
            "label",
            vec![
                "label",
                "--world",
                "world",
                "--annotations",
                "ann/annotations.jsonl",
                "--out",
                "lab",
            ],
        ),
        (
            "curate",
            vec![
                "curate",
                "--world",
                "world",
                "--labels",
                "lab/labels.jsonl",
                "--out",
                "cur",
            ],
        ),
        (
            "train single",
            vec![
                "train-reward",
                "--prepared",
                "cur/prepared.json",
                "--kind",
                "single",
                "--out",
                "t-single",
            ],
        ),
        (
            "train sequential",
            vec![
                "train-reward",
                "--prepared",
                "cur/prepared.json",
                "--kind",
                "sequential",
                "--out",
                "t-sequential",
            ],
        ),
        (
            "train parallel",
            vec![
                "train-reward",
                "--prepared",
                "cur/prepared.json",
                "--kind",
                "parallel",
                "--out",
                "t-parallel",
            ],
        ),
        (
            "eval-reward",
            vec![
                "eval-reward",
                "--prepared",
                "cur/prepared.json",
                "--net",
                "t-single/net-single.txt",
                "--net",
                "t-sequential/net-sequential.txt",
                "--net",
                "t-parallel/net-parallel.txt",
                "--out",
                "eval",
            ],
        ),
        ("theory", vec!["theory", "--out", "theory"]),
        ("riskclust", vec!["riskclust", "--out", "risk"]),
        ("grpo", vec!["grpo", "--out", "grpo"]),
        (
            "report",
            vec![
                "report", "--run", "eval", "--run", "theory", "--run", "risk", "--run", "grpo", "--out", "report",
            ],
        ),
    ];
    let mut failures = Vec::new();
    let mut dirs = Vec::new();
    for (name, args) in &steps {
        let (code, text) = arblab(d, args);
        if code != 0 {
            failures.push(format!("{name} exited {code}: {}", text.trim()));
        }
        dirs.push(*args.iter().skip_while(|a| **a != "--out").nth(1).unwrap());
    }
    let mut replayed = 0;
    for dir in &dirs {
        let manifest = format!("{dir}/manifest.json");
        let (code, text) = arblab(d, &["replay", "--manifest", &manifest]);
        if code == 0 && text.contains("replay identical") && !text.contains("DIFF") {
            replayed += 1;
        } else {
            failures.push(format!("replay {dir} exited {code}: {}", text.trim()));
        }
    }

    // The staged path must agree with the in-process experiment.
    let staged: Vec<EvalReport> = serde_json::from_slice(&std::fs::read(d.join("eval/eval.json")).unwrap()).unwrap();
    let cfg = ExperimentConfig::default();
    let prep = prepare(&cfg, 0).unwrap();
    for kind in RewardKind::ALL {
        let (_, direct) = train_and_eval(&cfg, &prep, kind, true).unwrap();
        let s = staged.iter().find(|r| r.kind == kind).unwrap();
        if s.cells != direct.cells || s.hard_negative_pass_rate != direct.hard_negative_pass_rate {
            failures.push(format!("{} staged eval differs from in-process", kind.name()));
        }
    }
    let table = std::fs::read_to_string(d.join("report/report.tsv")).unwrap_or_default();
    if !table
        .lines()
        .any(|l| l.starts_with("verdict\tparallel>sequential>single@2"))
    {
        failures.push("report has no architecture verdict row".into());
    }
    let passed = failures.is_empty() && replayed == dirs.len();
    verdict(
        11,
        passed,
        &format!(
            "{replayed}/{} manifests replayed byte-identically; staged eval matches in-process; {}",
            dirs.len(),
            if failures.is_empty() {
                "no failures".to_string()
            } else {
                failures.join(" | ")
            }
        ),
    );
    assert!(passed, "{failures:?}");
}
