//! Numeric core: arrays, small networks, losses, gradient checks and
//! optimizers.

pub mod array;
pub mod check;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod serial;

pub use array::NumArray;
pub use check::{grad_check, GradReport};
pub use loss::{
    loss_bt, loss_bt_grad, loss_joint, loss_joint_grad, loss_mse_vec, loss_mse_vec_grad, loss_supcon, sigmoid,
    softplus, supcon_from_logits, supcon_with_grad, JointGrad, Reduction, ScoredPair, ScoredTarget,
};
pub use mlp::{Activation, Mlp, Trace};
pub use optim::Sgd;
