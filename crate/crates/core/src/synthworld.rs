//! Synthetic universe of contexts, candidate responses with known
//! helpfulness / harmlessness scores, feature embeddings and simulated
//! five-round rater annotations.
//!
//! Response features follow `A · [s_help, s_harm, w_help] + η` with a fixed
//! mixing matrix `A`, so both scores are linearly recoverable from a
//! noiseless world.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{WeightVector, CANONICAL_WEIGHTS};
use crate::rng::{stream, LabRng};

/// Rater rounds per response.
pub const ROUNDS: usize = 5;

/// One of the five canonical context regimes (index into
/// [`CANONICAL_WEIGHTS`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextRegime(pub u8);

impl ContextRegime {
    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn base_weight(self) -> WeightVector {
        CANONICAL_WEIGHTS[self.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthContext {
    #[serde(rename = "context_id")]
    pub id: usize,
    pub regime: ContextRegime,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthResponse {
    #[serde(rename = "response_id")]
    pub id: usize,
    pub context_id: usize,
    pub regime: ContextRegime,
    pub s_help: f64,
    pub s_harm: f64,
    pub length: u32,
    pub category: u8,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRound {
    pub help: i8,
    pub harm: i8,
    pub option: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBundle {
    pub response_id: usize,
    pub rounds: Vec<AnnotationRound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_contexts: usize,
    pub responses_per_context: usize,
    pub context_dim: usize,
    pub response_dim: usize,
    /// Probability of each of the five regimes.
    pub regime_mixture: [f64; 5],
    pub feature_noise: f64,
    /// Scale of the mixing column that carries `w_help`.
    pub weight_signal: f64,
    /// Strength of the help/harm trade-off among responses: `s_harm` is
    /// drawn as `clamp(-t·s_help + sqrt(1-t²)·u, -2, 2)` with `u` uniform.
    pub tradeoff: f64,
    pub context_noise: f64,
    pub n_categories: u8,
    pub min_length: u32,
    pub max_length: u32,
    /// Ties length to helpfulness and category to regime when set.
    pub correlated_metadata: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_contexts: 2000,
            responses_per_context: 6,
            context_dim: 8,
            response_dim: 12,
            regime_mixture: [0.2; 5],
            feature_noise: 0.3,
            weight_signal: 1.0,
            tradeoff: 0.0,
            context_noise: 0.1,
            n_categories: 4,
            min_length: 20,
            max_length: 400,
            correlated_metadata: false,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_contexts == 0 {
            return bad("n_contexts must be positive".into());
        }
        if self.responses_per_context < 2 {
            return bad("responses_per_context must be at least 2".into());
        }
        if self.context_dim == 0 || self.response_dim < 3 {
            return bad("context_dim must be positive and response_dim at least 3".into());
        }
        if self.regime_mixture.iter().any(|p| !(*p >= 0.0))
            || (self.regime_mixture.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "regime_mixture {:?} must be non-negative and sum to 1",
                self.regime_mixture
            ));
        }
        if !(0.0..=1.0).contains(&self.tradeoff) {
            return bad(format!("tradeoff {} outside [0,1]", self.tradeoff));
        }
        if !(self.feature_noise >= 0.0 && self.context_noise >= 0.0 && self.weight_signal >= 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        if self.n_categories == 0 || self.min_length == 0 || self.min_length > self.max_length {
            return bad("need n_categories > 0 and 0 < min_length <= max_length".into());
        }
        Ok(())
    }
}

/// Rater noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaterNoise {
    pub help_std: f64,
    pub harm_std: f64,
    /// Probability that a round reports an option adjacent to the canonical one.
    pub flip_prob: f64,
}

impl Default for RaterNoise {
    fn default() -> Self {
        Self {
            help_std: 0.7,
            harm_std: 0.7,
            flip_prob: 0.3,
        }
    }
}

impl RaterNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.help_std >= 0.0 && self.harm_std >= 0.0) {
            return Err(Error::InvalidConfig("rater noise std must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidConfig(format!(
                "flip_prob {} outside [0,1]",
                self.flip_prob
            )));
        }
        Ok(())
    }
}

/// A generated world plus the generative matrices needed to create more
/// responses from the same model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    /// `response_dim x 3`, row-major; columns act on `[s_help, s_harm, w_help]`.
    pub mixing: Vec<f64>,
    /// `context_dim x 5`, row-major; columns are regime embeddings.
    pub context_mixing: Vec<f64>,
    pub contexts: Vec<SynthContext>,
    pub responses: Vec<SynthResponse>,
}

fn normal(rng: &mut LabRng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_regime(mixture: &[f64; 5], rng: &mut LabRng) -> ContextRegime {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in mixture.iter().enumerate() {
        acc += p;
        if u < acc {
            return ContextRegime(i as u8);
        }
    }
    // Rounding slack in the cumulative sum: last regime with mass.
    let last = mixture.iter().rposition(|&p| p > 0.0).unwrap_or(4);
    ContextRegime(last as u8)
}

impl World {
    /// Noise-free response feature `A · [s_help, s_harm, w_help]`.
    pub fn clean_feature(&self, s_help: f64, s_harm: f64, w_help: f64) -> Vec<f64> {
        let z = [s_help, s_harm, w_help];
        (0..self.config.response_dim)
            .map(|r| (0..3).map(|c| self.mixing[r * 3 + c] * z[c]).sum())
            .collect()
    }

    pub fn response_feature(&self, s_help: f64, s_harm: f64, w_help: f64, rng: &mut LabRng) -> Vec<f64> {
        let noise = self.config.feature_noise;
        let mut f = self.clean_feature(s_help, s_harm, w_help);
        if noise > 0.0 {
            for v in &mut f {
                *v += noise * normal(rng);
            }
        }
        f
    }

    pub fn context_feature(&self, regime: ContextRegime, rng: &mut LabRng) -> Vec<f64> {
        let noise = self.config.context_noise;
        (0..self.config.context_dim)
            .map(|r| {
                let base = self.context_mixing[r * 5 + regime.index()];
                if noise > 0.0 {
                    base + noise * normal(rng)
                } else {
                    base
                }
            })
            .collect()
    }

    pub fn responses_of(&self, context_id: usize) -> impl Iterator<Item = &SynthResponse> {
        self.responses.iter().filter(move |r| r.context_id == context_id)
    }
}

/// Generates contexts and their candidate responses.
pub fn gen_world(config: &WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let mut mrng = stream(seed, "synthworld/mixing", 0);
    let scale = 1.0 / 3f64.sqrt();
    let mixing = (0..config.response_dim * 3)
        .map(|i| {
            let col = if i % 3 == 2 { config.weight_signal } else { 1.0 };
            col * scale * normal(&mut mrng)
        })
        .collect();
    let context_mixing = (0..config.context_dim * 5).map(|_| normal(&mut mrng)).collect();
    let mut world = World {
        config: config.clone(),
        seed,
        mixing,
        context_mixing,
        contexts: Vec::with_capacity(config.n_contexts),
        responses: Vec::with_capacity(config.n_contexts * config.responses_per_context),
    };
    for c in 0..config.n_contexts {
        let mut rng = stream(seed, "synthworld/context", c as u64);
        let regime = sample_regime(&config.regime_mixture, &mut rng);
        let feature = world.context_feature(regime, &mut rng);
        let w_help = regime.base_weight().w_help;
        for j in 0..config.responses_per_context {
            let id = c * config.responses_per_context + j;
            let s_help = rng.random_range(-2.0..=2.0);
            let u: f64 = rng.random_range(-2.0..=2.0);
            let t = config.tradeoff;
            let s_harm = if t == 0.0 {
                u
            } else {
                (-t * s_help + (1.0 - t * t).sqrt() * u).clamp(-2.0, 2.0)
            };
            let feature = world.response_feature(s_help, s_harm, w_help, &mut rng);
            let (length, category) = if config.correlated_metadata {
                let span = f64::from(config.max_length - config.min_length);
                let frac = ((s_help + 2.0) / 4.0 * 0.7 + 0.3 * rng.random::<f64>()).clamp(0.0, 1.0);
                let len = config.min_length + (frac * span).round() as u32;
                (len, (regime.0 % config.n_categories))
            } else {
                (
                    rng.random_range(config.min_length..=config.max_length),
                    rng.random_range(0..config.n_categories),
                )
            };
            world.responses.push(SynthResponse {
                id,
                context_id: c,
                regime,
                s_help,
                s_harm,
                length,
                category,
                feature,
            });
        }
        world.contexts.push(SynthContext { id: c, regime, feature });
    }
    Ok(world)
}

/// `clamp(round(score + N(0, std²)), -2, 2)`; rounding is half away from zero.
pub fn noisy_rating<R: Rng + ?Sized>(score: f64, std: f64, rng: &mut R) -> i8 {
    let eps = if std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    } else {
        0.0
    };
    (score + eps).round().clamp(-2.0, 2.0) as i8
}

/// Simulates five rater rounds for one response.
pub fn simulate_annotations<R: Rng + ?Sized>(
    response: &SynthResponse,
    context: &SynthContext,
    noise: &RaterNoise,
    rng: &mut R,
) -> AnnotationBundle {
    let canonical = context.regime.index();
    let rounds = (0..ROUNDS)
        .map(|_| {
            let help = noisy_rating(response.s_help, noise.help_std, rng);
            let harm = noisy_rating(response.s_harm, noise.harm_std, rng);
            let option = if noise.flip_prob > 0.0 && rng.random::<f64>() < noise.flip_prob {
                match canonical {
                    0 => 1,
                    4 => 3,
                    k if rng.random::<bool>() => k - 1,
                    k => k + 1,
                }
            } else {
                canonical
            };
            AnnotationRound {
                help,
                harm,
                option: option as u8,
            }
        })
        .collect();
    AnnotationBundle {
        response_id: response.id,
        rounds,
    }
}

/// Annotates every response of `world`, one derived stream per response.
pub fn annotate_world(world: &World, noise: &RaterNoise, seed: u64) -> Result<Vec<AnnotationBundle>> {
    noise.validate()?;
    world
        .responses
        .iter()
        .map(|r| {
            let ctx = world
                .contexts
                .get(r.context_id)
                .filter(|c| c.id == r.context_id)
                .ok_or_else(|| Error::DanglingId(format!("context {} of response {}", r.context_id, r.id)))?;
            let mut rng = stream(seed, "annotate", r.id as u64);
            Ok(simulate_annotations(r, ctx, noise, &mut rng))
        })
        .collect()
}
