//! Fisher information of the single, multi-attribute and parallel
//! estimation problems on a sampled design.

use nalgebra::{DMatrix, SymmetricEigen};

use super::family::{Design, LinearFamily};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Information matrices summed over `n` samples. [`FisherSet::normalized`]
/// divides all three by `n`; orderings are unaffected.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherSet {
    pub n: usize,
    /// `(1/σ_ss) Σ φ_s φ_sᵀ`.
    pub single: DMatrix<f64>,
    /// `Σ_k (1/σ_kk) Σ φ_k φ_kᵀ`.
    pub multi: DMatrix<f64>,
    /// `single + multi`.
    pub par: DMatrix<f64>,
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

impl FisherSet {
    pub fn from_design(family: &LinearFamily, design: &Design) -> Self {
        let single = design.holistic.transpose() * &design.holistic / family.holistic_noise;
        let d = family.dim();
        let multi = design
            .attributes
            .iter()
            .zip(&family.attribute_noise)
            .fold(DMatrix::zeros(d, d), |acc, (phi, var)| {
                acc + phi.transpose() * phi / *var
            });
        let par = &single + &multi;
        Self {
            n: design.rows(),
            single,
            multi,
            par,
        }
    }

    pub fn normalized(&self) -> Self {
        let k = 1.0 / self.n as f64;
        Self {
            n: self.n,
            single: &self.single * k,
            multi: &self.multi * k,
            par: &self.par * k,
        }
    }

    /// Largest elementwise `|I_par - I_single - I_multi|`.
    pub fn identity_residual(&self) -> f64 {
        (&self.par - &self.single - &self.multi).abs().max()
    }

    /// Minimum eigenvalue of `I_par - I_single`.
    pub fn gain_min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&(&self.par - &self.single))
    }

    /// Whether the attribute tasks add information in every direction.
    pub fn strict(&self, eps: f64) -> bool {
        min_eigenvalue(&self.multi) > eps
    }

    /// `(trace I_single⁻¹, trace I_par⁻¹)`; `None` for a singular matrix.
    pub fn crlb_traces(&self) -> (Option<f64>, Option<f64>) {
        let tr = |m: &DMatrix<f64>| m.clone().try_inverse().map(|inv| inv.trace());
        (tr(&self.single), tr(&self.par))
    }
}

/// Fisher information on `n` covariates drawn from `seed`. With
/// `identifiable` set, a singular `I_par` is an error.
pub fn fisher(family: &LinearFamily, n: usize, seed: u64, identifiable: bool) -> Result<FisherSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("fisher needs n >= 1".into()));
    }
    let x = family.draw_covariates(n, &mut stream(seed, "theorylab/fisher", 0));
    let set = FisherSet::from_design(family, &family.design(&x));
    if identifiable {
        let scale = set.par.abs().max().max(1.0);
        if min_eigenvalue(&set.par) <= 1e-12 * scale {
            return Err(Error::Singular("parallel Fisher information is rank deficient".into()));
        }
    }
    Ok(set)
}
