use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffcore::{fsum, logsumexp, Graph, NodeId, Tensor};
use crate::error::{invalid, shape_err, Result};

/// `½N(0, σ²I) + ½N(αu, σ²I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureTarget {
    alpha: f64,
    sigma: f64,
    u: Vec<f64>,
}

impl MixtureTarget {
    pub fn new(alpha: f64, sigma: f64, u: Vec<f64>) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return invalid(format!("alpha must be non-negative, got {alpha}"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        let norm = fsum(u.iter().map(|x| x * x)).sqrt();
        if u.is_empty() || (norm - 1.0).abs() > 1e-12 {
            return invalid(format!("u must be a unit vector, has norm {norm}"));
        }
        Ok(MixtureTarget { alpha, sigma, u })
    }

    /// Target with `u = (1, 1, …)/√d`.
    pub fn diagonal(alpha: f64, sigma: f64, d: usize) -> Result<Self> {
        let c = 1.0 / (d as f64).sqrt();
        Self::new(alpha, sigma, vec![c; d])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    fn norm_const(&self) -> f64 {
        -0.5 * self.dim() as f64 * (2.0 * PI * self.sigma * self.sigma).ln()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return shape_err(format!("point of dimension {} for a {}-d target", x.len(), self.dim()));
        }
        let s2 = 2.0 * self.sigma * self.sigma;
        let a = fsum(x.iter().map(|v| v * v));
        let b = fsum(x.iter().zip(&self.u).map(|(v, u)| {
            let r = v - self.alpha * u;
            r * r
        }));
        let c = self.norm_const();
        Ok(logsumexp(&[c - a / s2, c - b / s2])? - std::f64::consts::LN_2)
    }

    /// Row-wise log-density of `[S, d]` points.
    pub fn log_density_rows(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let s2 = 2.0 * self.sigma * self.sigma;
        let c = self.norm_const();
        let shift = g.constant(Tensor::vector(self.u.iter().map(|u| self.alpha * u).collect()));
        let sq = g.square(x)?;
        let a = g.sum_rows(sq)?;
        let r = g.sub(x, shift)?;
        let rs = g.square(r)?;
        let b = g.sum_rows(rs)?;
        let a = g.scale(a, -1.0 / s2)?;
        let b = g.scale(b, -1.0 / s2)?;
        let both = g.stack_cols(&[a, b])?;
        let lme = g.logmeanexp_rows(both)?;
        g.offset(lme, c)
    }
}
