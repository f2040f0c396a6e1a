//! Monte-Carlo comparison of the single, sequential and parallel
//! estimators on a linear family.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{mean_stderr, Design, LinearFamily};
use super::fisher::FisherSet;
use crate::error::{Error, Result};
use crate::gradkit::sigmoid;
use crate::rng::stream;

/// How the sequential estimator uses the holistic labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SequentialMode {
    /// Attribute parameter frozen after stage 1; stage 2 fits only the
    /// per-attribute combiner.
    FrozenCombiner,
    /// Stage 2 runs `steps` of gradient descent on the holistic loss over
    /// the whole parameter, starting from the stage-1 estimate.
    FineTune { steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n: usize,
    pub replicates: usize,
    /// Held-out covariates per replicate.
    pub pool: usize,
    /// Held-out pairs per replicate for the preference error.
    pub pairs: usize,
    pub sequential: SequentialMode,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: 300,
            replicates: 200,
            pool: 2000,
            pairs: 1000,
            sequential: SequentialMode::FrozenCombiner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Single,
    Sequential,
    Parallel,
}

impl Framework {
    pub const ALL: [Framework; 3] = [Framework::Single, Framework::Sequential, Framework::Parallel];

    pub fn name(self) -> &'static str {
        match self {
            Framework::Single => "single",
            Framework::Sequential => "sequential",
            Framework::Parallel => "parallel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkStats {
    pub framework: Framework,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub pref_mean: f64,
    pub pref_stderr: f64,
}

/// Held-out errors of one replicate, indexed like [`Framework::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateErrors {
    pub mse: [f64; 3],
    pub pref: [f64; 3],
}

impl ReplicateErrors {
    pub fn par_beats_single_mse(&self) -> bool {
        self.mse[2] < self.mse[0]
    }
    pub fn par_beats_seq_mse(&self) -> bool {
        self.mse[2] < self.mse[1]
    }
    pub fn par_beats_single_pref(&self) -> bool {
        self.pref[2] < self.pref[0]
    }
    pub fn par_beats_seq_pref(&self) -> bool {
        self.pref[2] < self.pref[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    Holds,
    HoldsNonstrict,
    Fails,
    Indistinguishable,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Holds => "HOLDS",
            Verdict::HoldsNonstrict => "HOLDS-NONSTRICT",
            Verdict::Fails => "FAILS",
            Verdict::Indistinguishable => "INDISTINGUISHABLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub stats: Vec<FrameworkStats>,
    pub replicates: Vec<ReplicateErrors>,
    /// Replicates dropped because a fit was singular.
    pub singular: usize,
    /// `(trace I_single⁻¹, trace I_par⁻¹)` on the first replicate's design.
    pub crlb: (Option<f64>, Option<f64>),
}

/// Absolute MSE difference below which frameworks are not told apart.
pub const RESOLUTION_FLOOR: f64 = 1e-8;

impl McResult {
    pub fn stat(&self, f: Framework) -> &FrameworkStats {
        &self.stats[f as usize]
    }

    fn rate(&self, pred: impl Fn(&ReplicateErrors) -> bool) -> f64 {
        self.replicates.iter().filter(|r| pred(r)).count() as f64 / self.replicates.len().max(1) as f64
    }

    pub fn win_rate_mse_vs_single(&self) -> f64 {
        self.rate(ReplicateErrors::par_beats_single_mse)
    }
    pub fn win_rate_mse_vs_seq(&self) -> f64 {
        self.rate(ReplicateErrors::par_beats_seq_mse)
    }
    pub fn win_rate_pref_vs_single(&self) -> f64 {
        self.rate(ReplicateErrors::par_beats_single_pref)
    }
    pub fn win_rate_pref_vs_seq(&self) -> f64 {
        self.rate(ReplicateErrors::par_beats_seq_pref)
    }

    /// Ordering verdict on mean MSE: parallel strictly below both others
    /// by more than two standard errors and the resolution floor.
    pub fn verdict(&self) -> Verdict {
        let p = self.stat(Framework::Parallel);
        let others = [self.stat(Framework::Single), self.stat(Framework::Sequential)];
        if others
            .iter()
            .all(|o| (o.mse_mean - p.mse_mean).abs() <= RESOLUTION_FLOOR)
        {
            return Verdict::Indistinguishable;
        }
        let separated = |o: &FrameworkStats| {
            let gap = o.mse_mean - p.mse_mean;
            gap > RESOLUTION_FLOOR && gap > 2.0 * (o.mse_stderr.powi(2) + p.mse_stderr.powi(2)).sqrt()
        };
        if others.iter().all(|o| separated(o)) {
            Verdict::Holds
        } else if others.iter().all(|o| o.mse_mean >= p.mse_mean) {
            Verdict::HoldsNonstrict
        } else {
            Verdict::Fails
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::from("framework\tmse_mean\tmse_stderr\tpref_mean\tpref_stderr\n");
        for st in &self.stats {
            s.push_str(&format!(
                "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\n",
                st.framework.name(),
                st.mse_mean,
                st.mse_stderr,
                st.pref_mean,
                st.pref_stderr
            ));
        }
        s.push_str(&format!(
            "win_rate\tmse_vs_single={:.9}\tmse_vs_seq={:.9}\tpref_vs_single={:.9}\tpref_vs_seq={:.9}\n",
            self.win_rate_mse_vs_single(),
            self.win_rate_mse_vs_seq(),
            self.win_rate_pref_vs_single(),
            self.win_rate_pref_vs_seq()
        ));
        s.push_str(&format!("verdict\tarchitecture-ordering\t{}\n", self.verdict().label()));
        s
    }
}

/// Solves `A θ = b` for symmetric positive-definite `A`.
fn spd_solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(&b))
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    spd_solve(x.transpose() * x, x.transpose() * y)
}

/// Preference error: mean `|σ(Δr) - σ(Δg)|` over `pairs`.
pub fn preference_error(r: &[f64], g: &[f64], pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let terms: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| (sigmoid(r[a] - r[b]) - sigmoid(g[a] - g[b])).abs())
        .collect();
    super::family::pairwise_sum(&terms) / pairs.len() as f64
}

type Predictor = Box<dyn Fn(&Design) -> DVector<f64> + Send + Sync>;

/// The three estimators' holistic predictions on a held-out design.
struct Fits {
    single: DVector<f64>,
    parallel: DVector<f64>,
    sequential: Predictor,
}

fn fit_all(
    family: &LinearFamily,
    design: &Design,
    attrs: &[DVector<f64>],
    hol: &DVector<f64>,
    mode: SequentialMode,
) -> Option<Fits> {
    let single = least_squares(&design.holistic, hol)?;

    let d = family.dim();
    let mut a_attr = DMatrix::zeros(d, d);
    let mut b_attr = DVector::zeros(d);
    for ((phi, y), var) in design.attributes.iter().zip(attrs).zip(&family.attribute_noise) {
        a_attr += phi.transpose() * phi / *var;
        b_attr += phi.transpose() * y / *var;
    }
    let a_par = &a_attr + design.holistic.transpose() * &design.holistic / family.holistic_noise;
    let b_par = &b_attr + design.holistic.transpose() * hol / family.holistic_noise;
    let parallel = spd_solve(a_par, b_par)?;

    let theta_attr = spd_solve(a_attr, b_attr)?;
    let sequential: Predictor = match mode {
        SequentialMode::FrozenCombiner => {
            let k = family.attributes();
            let h = DMatrix::from_fn(design.rows(), k, |i, j| {
                design.attributes[j].row(i).dot(&theta_attr.transpose())
            });
            let c = least_squares(&h, hol)?;
            Box::new(move |des: &Design| {
                let mut out = DVector::zeros(des.rows());
                for (j, phi) in des.attributes.iter().enumerate() {
                    out += (phi * &theta_attr) * c[j];
                }
                out
            })
        }
        SequentialMode::FineTune { steps } => {
            let x = &design.holistic;
            let n = x.nrows() as f64;
            let gram = x.transpose() * x * (2.0 / n);
            let lmax = nalgebra::SymmetricEigen::new(gram.clone()).eigenvalues.max();
            let lr = if lmax > 0.0 { 1.0 / lmax } else { 0.0 };
            let xty = x.transpose() * hol * (2.0 / n);
            let mut theta = theta_attr;
            for _ in 0..steps {
                let grad = &gram * &theta - &xty;
                theta -= grad * lr;
            }
            Box::new(move |des: &Design| &des.holistic * &theta)
        }
    };
    Some(Fits {
        single,
        parallel,
        sequential,
    })
}

fn replicate(family: &LinearFamily, cfg: &McConfig, seed: u64, r: usize) -> Option<ReplicateErrors> {
    let mut rng = stream(seed, "theorylab/mc", r as u64);
    let x = family.draw_covariates(cfg.n, &mut rng);
    let design = family.design(&x);
    let (attrs, hol) = family.draw_labels(&design, &mut rng);
    let fits = fit_all(family, &design, &attrs, &hol, cfg.sequential)?;

    let xh = family.draw_covariates(cfg.pool, &mut rng);
    let held = family.design(&xh);
    let g = family.holistic_truth(&held);
    let preds = [
        &held.holistic * &fits.single,
        (fits.sequential)(&held),
        &held.holistic * &fits.parallel,
    ];
    let pairs: Vec<(usize, usize)> = (0..cfg.pairs)
        .map(|_| (rng.random_range(0..cfg.pool), rng.random_range(0..cfg.pool)))
        .collect();
    let mut mse = [0.0; 3];
    let mut pref = [0.0; 3];
    for (i, p) in preds.iter().enumerate() {
        let sq: Vec<f64> = p.iter().zip(g.iter()).map(|(a, b)| (a - b) * (a - b)).collect();
        mse[i] = super::family::pairwise_sum(&sq) / sq.len() as f64;
        pref[i] = preference_error(p.as_slice(), g.as_slice(), &pairs);
    }
    Some(ReplicateErrors { mse, pref })
}

/// Runs `cfg.replicates` independent replicates (in parallel, one derived
/// stream each) and summarizes held-out MSE and preference error.
pub fn mc_orderings(family: &LinearFamily, cfg: &McConfig, seed: u64) -> Result<McResult> {
    if cfg.replicates < 2 {
        return Err(Error::InvalidParameter(
            "mc_orderings needs at least 2 replicates".into(),
        ));
    }
    if cfg.n == 0 || cfg.pool < 2 {
        return Err(Error::InvalidParameter("n must be >= 1 and pool >= 2".into()));
    }
    let runs: Vec<Option<ReplicateErrors>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| replicate(family, cfg, seed, r))
        .collect();
    let singular = runs.iter().filter(|r| r.is_none()).count();
    let replicates: Vec<ReplicateErrors> = runs.into_iter().flatten().collect();
    if replicates.len() < 2 {
        return Err(Error::Singular(format!(
            "{singular} of {} replicates had singular fits",
            cfg.replicates
        )));
    }
    let stats = Framework::ALL
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let m: Vec<f64> = replicates.iter().map(|r| r.mse[i]).collect();
            let p: Vec<f64> = replicates.iter().map(|r| r.pref[i]).collect();
            let (mse_mean, mse_stderr) = mean_stderr(&m);
            let (pref_mean, pref_stderr) = mean_stderr(&p);
            FrameworkStats {
                framework: f,
                mse_mean,
                mse_stderr,
                pref_mean,
                pref_stderr,
            }
        })
        .collect();
    let x = family.draw_covariates(cfg.n, &mut stream(seed, "theorylab/mc", 0));
    let crlb = FisherSet::from_design(family, &family.design(&x)).crlb_traces();
    Ok(McResult {
        stats,
        replicates,
        singular,
        crlb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theorylab::family::FamilyConfig;

    #[test]
    fn perfect_fit_has_zero_preference_error() {
        let g = [0.1, -2.0, 3.5, 0.0];
        let pairs = [(0, 1), (2, 3), (1, 2)];
        assert_eq!(preference_error(&g, &g, &pairs), 0.0);
    }

    #[test]
    fn preference_error_is_below_one() {
        let r = [15.0, -15.0];
        let g = [-15.0, 15.0];
        let e = preference_error(&r, &g, &[(0, 1)]);
        assert!((0.0..1.0).contains(&e));
    }

    #[test]
    fn noiseless_limit_is_indistinguishable() {
        let cfg = FamilyConfig {
            dim: 6,
            attribute_noise: 1e-12,
            holistic_noise: 1e-12,
            ..Default::default()
        };
        let fam = LinearFamily::generate(&cfg, 1).unwrap();
        let mc = McConfig {
            n: 60,
            replicates: 10,
            pool: 200,
            pairs: 100,
            ..Default::default()
        };
        let res = mc_orderings(&fam, &mc, 2).unwrap();
        for s in &res.stats {
            assert!(s.mse_mean < 1e-8, "{s:?}");
        }
        assert_eq!(res.verdict(), Verdict::Indistinguishable);
    }

    #[test]
    fn fine_tune_mode_runs() {
        let fam = LinearFamily::generate(
            &FamilyConfig {
                dim: 5,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let mc = McConfig {
            n: 80,
            replicates: 4,
            pool: 100,
            pairs: 50,
            sequential: SequentialMode::FineTune { steps: 5 },
        };
        let res = mc_orderings(&fam, &mc, 0).unwrap();
        assert_eq!(res.replicates.len(), 4);
    }

    #[test]
    fn too_few_replicates_rejected() {
        let fam = LinearFamily::generate(
            &FamilyConfig {
                dim: 3,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let mc = McConfig {
            replicates: 1,
            ..Default::default()
        };
        assert!(mc_orderings(&fam, &mc, 0).is_err());
    }
}
