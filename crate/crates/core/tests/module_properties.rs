use arblab::curation::{mine_pairs, split_bt_mse, SplitConfig};
use arblab::grpoloop::{grpo_experiment, GrpoPipeline};
use arblab::labeling::{aggregate_corpus, draw_step, AdjustParams, StepMode};
use arblab::rewardlab::{prepare, ExperimentConfig};
use arblab::rng::stream;
use arblab::synthworld::{
    annotate_world, gen_world, simulate_annotations, ContextRegime, RaterNoise, SynthContext, SynthResponse,
    WorldConfig,
};
use arblab::theorylab::{fisher, mc_orderings, FamilyConfig, Framework, LinearFamily, McConfig};
use nalgebra::DMatrix;

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

#[test]
fn regime_frequencies_match_the_mixture() {
    let cfg = WorldConfig {
        n_contexts: 10_000,
        responses_per_context: 2,
        ..WorldConfig::default()
    };
    let world = gen_world(&cfg, 7).unwrap();
    let mut counts = [0usize; 5];
    for c in &world.contexts {
        counts[c.regime.index()] += 1;
    }
    for (k, &n) in counts.iter().enumerate() {
        let freq = n as f64 / 10_000.0;
        assert!((freq - cfg.regime_mixture[k]).abs() <= 0.03, "regime {k}: {freq}");
    }
}

#[test]
fn rater_mae_matches_integrated_clamp_round_mae() {
    let std = 0.7;
    let noise = RaterNoise {
        help_std: std,
        ..RaterNoise::default()
    };
    let ctx = SynthContext {
        id: 0,
        regime: ContextRegime(2),
        feature: vec![0.0],
    };
    let mut rng = stream(11, "test/rater", 0);
    for s in [-1.7, 0.0, 0.3, 1.25, 2.0] {
        let resp = SynthResponse {
            id: 0,
            context_id: 0,
            regime: ContextRegime(2),
            s_help: s,
            s_harm: 0.0,
            length: 50,
            category: 0,
            feature: vec![0.0],
        };
        let mut total = 0.0;
        let mut rounds = 0usize;
        while rounds < 100_000 {
            for r in simulate_annotations(&resp, &ctx, &noise, &mut rng).rounds {
                total += (r.help as f64 - s).abs();
                rounds += 1;
            }
        }
        let empirical = total / rounds as f64;
        // Integrate over the gaussian noise, 8 sd either side.
        let rated = |e: f64| ((s + e).round().clamp(-2.0, 2.0) - s).abs() * std_normal_pdf(e / std) / std;
        let lo = -8.0 * std;
        let hi = 8.0 * std;
        // Split at the rounding discontinuities so Simpson sees smooth pieces.
        let mut cuts: Vec<f64> = (-3..=3)
            .map(|k| k as f64 + 0.5 - s)
            .filter(|c| *c > lo && *c < hi)
            .collect();
        cuts.insert(0, lo);
        cuts.push(hi);
        let analytic: f64 = cuts.windows(2).map(|w| simpson(rated, w[0], w[1], 2000)).sum();
        assert!(
            (empirical - analytic).abs() <= 0.05,
            "s {s}: empirical {empirical} vs {analytic}"
        );
    }
}

#[test]
fn scores_are_linearly_recoverable_on_a_noiseless_world() {
    let cfg = WorldConfig {
        feature_noise: 0.0,
        n_contexts: 300,
        ..WorldConfig::default()
    };
    let world = gen_world(&cfg, 3).unwrap();
    let n = world.responses.len();
    let d = cfg.response_dim;
    let x = DMatrix::from_fn(n, d, |i, j| world.responses[i].feature[j]);
    let y = DMatrix::from_fn(n, 2, |i, j| {
        let r = &world.responses[i];
        if j == 0 {
            r.s_help
        } else {
            r.s_harm
        }
    });
    let beta = x.clone().svd(true, true).solve(&y, 1e-12).unwrap();
    let residual = (&x * beta - &y).norm();
    assert!(residual < 1e-8, "{residual}");
}

#[test]
fn labels_are_reproducible_and_weights_continuous() {
    let world = gen_world(&WorldConfig::default(), 7).unwrap();
    let bundles = annotate_world(&world, &RaterNoise::default(), 7).unwrap();
    let params = AdjustParams::default();
    let a = aggregate_corpus(&bundles, &world.responses, &params, 7).unwrap();
    let b = aggregate_corpus(&bundles, &world.responses, &params, 7).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let at_base = a.iter().filter(|l| l.w_final.canonical_index().is_some()).count();
    let frac = at_base as f64 / a.len() as f64;
    assert!(frac < 0.6, "{frac} of the weight mass sits on the canonical points");
    for l in &a {
        let w = l.w_final;
        assert!((w.w_help + w.w_harm - 1.0).abs() <= 1e-12);
        let expect = l.w_base.w_help + l.alpha * (l.w_target.w_help - l.w_base.w_help);
        assert!((w.w_help - expect).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&l.alpha));
    }
}

/// `E[min(|X|, 1)]` for `X ~ N(0, sigma²)`.
fn clipped_folded_mean(sigma: f64) -> f64 {
    let density = |x: f64| 2.0 * std_normal_pdf(x / sigma) / sigma;
    let inside = simpson(|x| x * density(x), 0.0, 1.0, 20_000);
    let mass = simpson(density, 0.0, 1.0, 20_000);
    inside + (1.0 - mass)
}

#[test]
fn step_mean_matches_quadrature() {
    let mut rng = stream(5, "test/alpha", 0);
    let n = 1_000_000;
    let mean = (0..n)
        .map(|_| draw_step(0.25, StepMode::Folded, &mut rng).unwrap())
        .sum::<f64>()
        / n as f64;
    let oracle = clipped_folded_mean(0.25);
    assert!((mean - oracle).abs() <= 0.002, "{mean} vs {oracle}");
}

fn default_labels() -> (arblab::synthworld::World, Vec<arblab::labeling::AggregatedLabel>) {
    let world = gen_world(&WorldConfig::default(), 7).unwrap();
    let bundles = annotate_world(&world, &RaterNoise::default(), 7).unwrap();
    let labels = aggregate_corpus(&bundles, &world.responses, &AdjustParams::default(), 7).unwrap();
    (world, labels)
}

#[test]
fn zero_bt_fraction_sends_everything_to_regression() {
    let (world, labels) = default_labels();
    let eligible = mine_pairs(&labels, &world.responses, 3.6).unwrap();
    assert!(!eligible.is_empty());
    let cfg = SplitConfig {
        bt_frac: 0.0,
        ..SplitConfig::default()
    };
    let c = split_bt_mse(&eligible, &labels, &world.responses, &cfg, 7).unwrap();
    assert!(c.d_bt.is_empty());
    let pooled: usize = c.bins.iter().map(|b| b.population).sum();
    assert_eq!(pooled, labels.len());
}

#[test]
fn regression_cells_are_balanced_on_the_default_world() {
    let (world, labels) = default_labels();
    let eligible = mine_pairs(&labels, &world.responses, 3.6).unwrap();
    let cfg = SplitConfig::default();
    let c = split_bt_mse(&eligible, &labels, &world.responses, &cfg, 7).unwrap();
    for b in &c.bins {
        assert_eq!(b.drawn, b.population.min(cfg.per_bin));
    }
    let occupied: Vec<usize> = c.bins.iter().filter(|b| b.drawn > 0).map(|b| b.drawn).collect();
    let ratio = *occupied.iter().max().unwrap() as f64 / *occupied.iter().min().unwrap() as f64;
    assert!(ratio <= 1.0 + 1.0 / cfg.per_bin as f64, "{ratio}");
}

#[test]
fn templates_only_ever_replace_the_rejected_side() {
    let prep = prepare(&ExperimentConfig::default(), 0).unwrap();
    let n_resp = prep.labels.len();
    let flagged: Vec<_> = prep.injected.iter().filter(|p| p.hard_negative).collect();
    assert!(!flagged.is_empty());
    for p in &prep.injected {
        assert!(p.chosen_id < n_resp);
        assert_eq!(p.hard_negative, p.template_id.is_some());
        let chosen_sw = prep.labels[p.chosen_id].s_w;
        if let Some(t) = p.template_id {
            assert!(prep.train_templates[t].target[2] < chosen_sw);
        }
    }
}

#[test]
fn crlb_trace_drops_whenever_the_gain_is_positive_definite() {
    let mut strict_seen = 0;
    for seed in 0..10 {
        let family = LinearFamily::generate(&FamilyConfig::default(), seed).unwrap();
        let set = fisher(&family, 300, seed, true).unwrap();
        assert!(set.identity_residual() <= 1e-10);
        if set.strict(1e-9) {
            strict_seen += 1;
            let (single, par) = set.crlb_traces();
            assert!(par.unwrap() < single.unwrap(), "seed {seed}");
        }
    }
    assert!(strict_seen > 0);
}

#[test]
fn mc_stderr_shrinks_with_the_square_root_of_replicates() {
    let family = LinearFamily::generate(&FamilyConfig::default(), 0).unwrap();
    let stderr = |replicates: usize| {
        let cfg = McConfig {
            replicates,
            ..McConfig::default()
        };
        mc_orderings(&family, &cfg, 9)
            .unwrap()
            .stat(Framework::Parallel)
            .mse_stderr
    };
    let (s1, s2, s4) = (stderr(200), stderr(400), stderr(800));
    let doubled = s1 / s2;
    let quadrupled = s1 / s4;
    assert!((doubled / 2f64.sqrt() - 1.0).abs() <= 0.3, "doubling ratio {doubled}");
    assert!((quadrupled / 2.0 - 1.0).abs() <= 0.3, "quadrupling ratio {quadrupled}");
}

#[test]
fn a_heavy_kl_penalty_binds() {
    let base = GrpoPipeline::default();
    let mut light = base.clone();
    light.grpo.kl_coef = 0.01;
    let mut heavy = base;
    heavy.grpo.kl_coef = 100.0;
    let kl_light = grpo_experiment(&light, 0).unwrap().final_kl;
    let kl_heavy = grpo_experiment(&heavy, 0).unwrap().final_kl;
    assert!(kl_heavy < kl_light, "heavy {kl_heavy} light {kl_light}");
}

#[test]
fn grpo_runs_are_deterministic() {
    let p = GrpoPipeline::default();
    let a = grpo_experiment(&p, 3).unwrap();
    let b = grpo_experiment(&p, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

/// Read as a statement about the typical template: its median weighted
/// score sits below the median over the corpus responses.
#[test]
fn templates_score_below_the_corpus_median_on_a_trained_parallel_net() {
    use arblab::rewardlab::{train_and_eval, RewardKind};
    let cfg = ExperimentConfig::default();
    let w = RewardKind::Parallel.weighted_index();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    for seed in 0..5 {
        let prep = prepare(&cfg, seed).unwrap();
        let (net, _) = train_and_eval(&cfg, &prep, RewardKind::Parallel, true).unwrap();
        let corpus = median(prep.features.iter().map(|f| net.score(f).unwrap()[w]).collect());
        let templates = median(prep.probes.iter().map(|p| net.score(&p.template).unwrap()[w]).collect());
        assert!(
            templates < corpus,
            "seed {seed}: template median {templates} vs corpus median {corpus}"
        );
    }
}
