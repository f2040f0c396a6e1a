//! Stochastic gradient descent with momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, n_params: usize) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![0.0; n_params],
        }
    }

    /// `v <- μ v + g; θ <- θ - lr v`, skipping entries where `trainable` is false.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], trainable: Option<&[bool]>) -> Result<()> {
        if params.len() != self.velocity.len() || grad.len() != params.len() {
            return Err(Error::dim("Sgd::step", self.velocity.len(), grad.len()));
        }
        for i in 0..params.len() {
            if trainable.is_some_and(|m| !m[i]) {
                continue;
            }
            self.velocity[i] = self.momentum * self.velocity[i] + grad[i];
            params[i] -= self.lr * self.velocity[i];
        }
        Ok(())
    }
}
