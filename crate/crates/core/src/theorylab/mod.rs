//! Linear-Gaussian reward families on which estimator orderings, Fisher
//! information identities and error bounds can be checked directly.

pub mod bounds;
pub mod family;
pub mod fisher;
pub mod mc;

pub use bounds::{
    cov_mse_check, cov_mse_scaling, pair_bound, pair_bound_check, pair_bound_samples, CovMseReport, PairBoundReport,
    ProbeGap, Quad,
};
pub use family::{mean_stderr, pairwise_sum, Covariates, Design, FamilyConfig, LinearFamily};
pub use fisher::{fisher, min_eigenvalue, FisherSet};
pub use mc::{
    mc_orderings, preference_error, Framework, FrameworkStats, McConfig, McResult, ReplicateErrors, SequentialMode,
    Verdict, RESOLUTION_FLOOR,
};
