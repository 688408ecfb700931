//! Variational families: mean-field Gaussians over weight space and a
//! full-covariance Gaussian for fitting low-dimensional mixtures.

mod cholesky;
mod meanfield;
mod mixture;

pub use cholesky::{CholeskyGaussian, CholeskyNodes};
pub use meanfield::{MeanFieldGaussian, MeanFieldNodes, MuInit};
pub use mixture::MixtureTarget;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Isotropic Gaussian prior `N(0, std²·I)` over the weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub std: f64,
}

impl PriorSpec {
    pub fn new(std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return invalid(format!("prior std must be positive, got {std}"));
        }
        Ok(PriorSpec { std })
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { std: 1.0 }
    }
}
