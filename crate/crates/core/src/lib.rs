//! Desk-scale laboratory for context-weighted multi-objective reward
//! modeling: label aggregation, data curation, reward architectures,
//! estimator-efficiency theory, contrastive risk clustering and a toy
//! group-relative policy optimizer, all on synthetic data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curation;
pub mod error;
pub mod gradkit;
pub mod grpoloop;
pub mod harness;
pub mod labeling;
pub mod rewardlab;
pub mod riskclust;
pub mod rng;
pub mod synthworld;
pub mod theorylab;

pub use error::{Error, Result};
