use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffcore::{fsum, Graph, NodeId, Tensor};
use crate::error::{invalid, shape_err, Error, Result};

/// Full-covariance Gaussian `N(μ, LLᵀ)`.
///
/// `chol_raw` is a row-major `d×d` matrix; its strict lower triangle is used
/// as is, its diagonal goes through `exp`, and the upper triangle is ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CholeskyGaussian {
    mu: Vec<f64>,
    chol_raw: Vec<f64>,
}

impl CholeskyGaussian {
    pub fn new(mu: Vec<f64>, chol_raw: Vec<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return invalid("zero-dimensional Gaussian");
        }
        if chol_raw.len() != d * d {
            return shape_err(format!("factor has {} entries for dimension {d}", chol_raw.len()));
        }
        if mu.iter().chain(&chol_raw).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Cholesky parameters".into()));
        }
        Ok(CholeskyGaussian { mu, chol_raw })
    }

    /// `N(μ, std²·I)`.
    pub fn isotropic(mu: Vec<f64>, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return invalid(format!("std must be positive, got {std}"));
        }
        let d = mu.len();
        let mut raw = vec![0.0; d * d];
        for i in 0..d {
            raw[i * d + i] = std.ln();
        }
        Self::new(mu, raw)
    }

    /// From an explicit lower-triangular factor with positive diagonal.
    pub fn from_factor(mu: Vec<f64>, l: &[f64]) -> Result<Self> {
        let d = mu.len();
        if l.len() != d * d {
            return shape_err(format!("factor has {} entries for dimension {d}", l.len()));
        }
        let mut raw = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..i {
                raw[i * d + j] = l[i * d + j];
            }
            if !(l[i * d + i] > 0.0) {
                return invalid("factor diagonal must be positive");
            }
            raw[i * d + i] = l[i * d + i].ln();
        }
        Self::new(mu, raw)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn chol_raw(&self) -> &[f64] {
        &self.chol_raw
    }

    /// Effective lower-triangular factor `L`.
    pub fn factor(&self) -> Vec<f64> {
        let d = self.dim();
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..i {
                l[i * d + j] = self.chol_raw[i * d + j];
            }
            l[i * d + i] = self.chol_raw[i * d + i].exp();
        }
        l
    }

    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let l = self.factor();
        let mut s = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] = fsum((0..d).map(|k| l[i * d + k] * l[j * d + k]));
            }
        }
        s
    }

    fn log_diag_sum(&self) -> f64 {
        let d = self.dim();
        fsum((0..d).map(|i| self.chol_raw[i * d + i]))
    }

    pub fn log_det_cov(&self) -> f64 {
        2.0 * self.log_diag_sum()
    }

    pub fn det_cov(&self) -> f64 {
        self.log_det_cov().exp()
    }

    /// `μ + L·ε`.
    pub fn sample(&self, eps: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if eps.len() != d {
            return shape_err(format!("eps has {} entries for dimension {d}", eps.len()));
        }
        let l = self.factor();
        Ok((0..d)
            .map(|i| self.mu[i] + fsum((0..=i).map(|k| l[i * d + k] * eps[k])))
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return shape_err(format!("point has {} entries for dimension {d}", x.len()));
        }
        let l = self.factor();
        // Forward substitution for z = L⁻¹(x − μ).
        let mut z = vec![0.0; d];
        for i in 0..d {
            let s = fsum((0..i).map(|k| l[i * d + k] * z[k]));
            z[i] = (x[i] - self.mu[i] - s) / l[i * d + i];
        }
        let quad = fsum(z.iter().map(|v| v * v));
        Ok(-0.5 * d as f64 * (2.0 * PI).ln() - self.log_diag_sum() - 0.5 * quad)
    }

    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (2.0 * PI * std::f64::consts::E).ln() + self.log_diag_sum()
    }
}

/// Parameter nodes of a [`CholeskyGaussian`].
#[derive(Clone, Copy, Debug)]
pub struct CholeskyNodes {
    pub mu: NodeId,
    pub raw: NodeId,
    factor: NodeId,
    log_diag_sum: NodeId,
    dim: usize,
}

impl CholeskyNodes {
    pub fn declare(g: &mut Graph, dim: usize) -> Result<Self> {
        let mu = g.param(&[dim]);
        let raw = g.param(&[dim, dim]);
        let mut lower = vec![0.0; dim * dim];
        let mut diag = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..i {
                lower[i * dim + j] = 1.0;
            }
            diag[i * dim + i] = 1.0;
        }
        let lower = g.constant(Tensor::matrix(dim, dim, lower)?);
        let diag = g.constant(Tensor::matrix(dim, dim, diag)?);
        let off = g.mul(raw, lower)?;
        let e = g.exp(raw)?;
        let on = g.mul(e, diag)?;
        let factor = g.add(off, on)?;
        let raw_diag = g.mul(raw, diag)?;
        let log_diag_sum = g.sum(raw_diag)?;
        Ok(CholeskyNodes {
            mu,
            raw,
            factor,
            log_diag_sum,
            dim,
        })
    }

    pub fn bind(&self, q: &CholeskyGaussian, bindings: &mut HashMap<NodeId, Tensor>) -> Result<()> {
        if q.dim() != self.dim {
            return shape_err(format!(
                "binding dimension {} to nodes of dimension {}",
                q.dim(),
                self.dim
            ));
        }
        bindings.insert(self.mu, Tensor::vector(q.mu.clone()));
        bindings.insert(self.raw, Tensor::matrix(self.dim, self.dim, q.chol_raw.clone())?);
        Ok(())
    }

    /// Rows of `eps` (`[S, d]`) mapped to `μ + L·ε`.
    pub fn sample(&self, g: &mut Graph, eps: NodeId) -> Result<NodeId> {
        let x = g.matmul_t(eps, self.factor)?;
        g.add(x, self.mu)
    }

    /// Mean of `log q(xᵢ)` over reparameterised draws `xᵢ = μ + L·εᵢ`.
    ///
    /// Since `L⁻¹(xᵢ − μ) = εᵢ` exactly, the quadratic form is a constant of the
    /// noise and only the `log|L|` term depends on the parameters.
    pub fn mean_log_density_of_draws(&self, g: &mut Graph, eps: &Tensor) -> Result<NodeId> {
        let s = eps.rows() as f64;
        let quad = fsum(eps.data().iter().map(|e| e * e)) / s;
        let neg = g.neg(self.log_diag_sum)?;
        g.offset(neg, -0.5 * self.dim as f64 * (2.0 * PI).ln() - 0.5 * quad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_2d() {
        let q = CholeskyGaussian::isotropic(vec![0.0, 0.0], 1.0).unwrap();
        assert!((q.log_density(&[0.0, 0.0]).unwrap() + 1.837_877_066_409_345_3).abs() < 1e-15);
        let q1 = CholeskyGaussian::isotropic(vec![0.0], 1.0).unwrap();
        assert!((q1.entropy() - 0.5 * (2.0 * PI * std::f64::consts::E).ln()).abs() < 1e-15);
    }

    #[test]
    fn factor_round_trip() {
        let l = [1.5, 0.0, -0.3, 0.4];
        let q = CholeskyGaussian::from_factor(vec![1.0, 2.0], &l).unwrap();
        assert_eq!(q.factor()[2], -0.3);
        assert!((q.factor()[3] - 0.4).abs() < 1e-15);
        assert!((q.det_cov() - (1.5f64 * 0.4).powi(2)).abs() < 1e-12);
        assert!(CholeskyGaussian::new(vec![0.0], vec![f64::NAN]).is_err());
    }
}
