//! Single, sequential and parallel reward architectures: construction,
//! training on a curated corpus, and thresholded preference evaluation.

pub mod eval;
pub mod experiment;
pub mod net;
pub mod templates;
pub mod train;

pub use eval::{
    accuracy_from_scores, eval_pref, hard_negative_pass_rate, AccuracyCell, Dimension, EvalItem, EvalPair, EvalReport,
    HardNegativeProbe,
};
pub use experiment::{
    compare_architectures, evaluate, hard_negative_robustness, mean_over_seeds, prepare, prepare_from, train_and_eval,
    train_kind, ExperimentConfig, Prepared, RobustnessResult, SeedResult,
};
pub use net::{build, NetDims, RewardKind, RewardNet};
pub use templates::{craft_templates, proxy_direction, TemplateConfig};
pub use train::{train, train_voter, LossTrace, StageTrace, TrainConfig, TrainSet};
