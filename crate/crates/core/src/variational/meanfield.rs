use std::collections::HashMap;
use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PriorSpec;
use crate::diffcore::{fsum, Graph, NodeId, Tensor};
use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::Rng;
use crate::weightspace::{Architecture, WeightVector};

/// How the variational means are initialised.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuInit {
    /// Gaussian with standard deviation `1/√fan_in` per layer.
    FanIn,
    /// Gaussian with a fixed standard deviation.
    Std(f64),
}

/// `N(μ, diag(σ²))` with `σ = exp(ρ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldGaussian {
    mu: Vec<f64>,
    rho: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if mu.len() != rho.len() {
            return shape_err(format!("mu has {} entries, rho {}", mu.len(), rho.len()));
        }
        if mu.iter().chain(&rho).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("variational parameters".into()));
        }
        Ok(MeanFieldGaussian { mu, rho })
    }

    pub fn from_sigma(mu: Vec<f64>, sigma: &[f64]) -> Result<Self> {
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return invalid("sigma must be positive");
        }
        Self::new(mu, sigma.iter().map(|s| s.ln()).collect())
    }

    pub fn init(arch: &Architecture, mu_init: MuInit, rho0: f64, rng: &mut Rng) -> Result<Self> {
        let fan = arch.fan_in();
        let mu = fan
            .iter()
            .map(|&f| {
                let s = match mu_init {
                    MuInit::FanIn => 1.0 / (f as f64).sqrt(),
                    MuInit::Std(s) => s,
                };
                Normal::new(0.0, s)
                    .map(|n| n.sample(rng))
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mu, vec![rho0; fan.len()])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r.exp()).collect()
    }

    pub fn check_arch(&self, arch: &Architecture) -> Result<()> {
        if self.dim() != arch.num_params() {
            return shape_err(format!(
                "posterior over {} weights, architecture has {}",
                self.dim(),
                arch.num_params()
            ));
        }
        Ok(())
    }

    /// `μ + σ ⊙ ε`.
    pub fn sample(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.dim() {
            return shape_err(format!("eps has {} entries for dimension {}", eps.len(), self.dim()));
        }
        Ok(self
            .mu
            .iter()
            .zip(&self.rho)
            .zip(eps)
            .map(|((m, r), e)| m + r.exp() * e)
            .collect())
    }

    pub fn sample_weights(&self, arch: &Architecture, eps: &[f64]) -> Result<WeightVector> {
        WeightVector::new(arch, self.sample(eps)?)
    }

    pub fn log_density(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim() {
            return shape_err(format!("point has {} entries for dimension {}", w.len(), self.dim()));
        }
        let quad = fsum(w.iter().zip(&self.mu).zip(&self.rho).map(|((x, m), r)| {
            let z = (x - m) * (-r).exp();
            z * z
        }));
        Ok(-0.5 * quad - fsum(self.rho.iter().copied()) - 0.5 * self.dim() as f64 * (2.0 * PI).ln())
    }

    pub fn entropy(&self) -> f64 {
        fsum(self.rho.iter().copied()) + 0.5 * self.dim() as f64 * (2.0 * PI * std::f64::consts::E).ln()
    }

    pub fn kl_to_prior(&self, prior: &PriorSpec) -> f64 {
        let s2 = prior.std * prior.std;
        let d = self.dim() as f64;
        let quad = fsum(self.mu.iter().zip(&self.rho).map(|(m, r)| (2.0 * r).exp() + m * m));
        d * (prior.std.ln() - 0.5) - fsum(self.rho.iter().copied()) + quad / (2.0 * s2)
    }
}

/// Parameter nodes of a mean-field posterior inside a graph, plus derived
/// quantities shared by every expression that uses them.
#[derive(Clone, Copy, Debug)]
pub struct MeanFieldNodes {
    pub mu: NodeId,
    pub rho: NodeId,
    sigma: NodeId,
    inv_sigma: NodeId,
    sum_rho: NodeId,
    dim: usize,
}

impl MeanFieldNodes {
    pub fn declare(g: &mut Graph, dim: usize) -> Result<Self> {
        let mu = g.param(&[dim]);
        let rho = g.param(&[dim]);
        let sigma = g.exp(rho)?;
        let neg = g.neg(rho)?;
        let inv_sigma = g.exp(neg)?;
        let sum_rho = g.sum(rho)?;
        Ok(MeanFieldNodes {
            mu,
            rho,
            sigma,
            inv_sigma,
            sum_rho,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bind(&self, q: &MeanFieldGaussian, bindings: &mut HashMap<NodeId, Tensor>) -> Result<()> {
        if q.dim() != self.dim {
            return shape_err(format!(
                "binding {} weights to nodes of dimension {}",
                q.dim(),
                self.dim
            ));
        }
        bindings.insert(self.mu, Tensor::vector(q.mu.clone()));
        bindings.insert(self.rho, Tensor::vector(q.rho.clone()));
        Ok(())
    }

    /// Reparameterised draws: rows of `eps` (`[S, D]`) mapped to `μ + σ ⊙ ε`.
    pub fn sample(&self, g: &mut Graph, eps: NodeId) -> Result<NodeId> {
        let scaled = g.mul(eps, self.sigma)?;
        g.add(scaled, self.mu)
    }

    /// Row-wise log-density of `[S, D]` points.
    pub fn log_density_rows(&self, g: &mut Graph, w: NodeId) -> Result<NodeId> {
        let c = g.sub(w, self.mu)?;
        let z = g.mul(c, self.inv_sigma)?;
        let sq = g.square(z)?;
        let quad = g.sum_rows(sq)?;
        let half = g.scale(quad, -0.5)?;
        let lp = g.sub(half, self.sum_rho)?;
        g.offset(lp, -0.5 * self.dim as f64 * (2.0 * PI).ln())
    }

    pub fn entropy(&self, g: &mut Graph) -> Result<NodeId> {
        g.offset(
            self.sum_rho,
            0.5 * self.dim as f64 * (2.0 * PI * std::f64::consts::E).ln(),
        )
    }

    pub fn kl_to_prior(&self, g: &mut Graph, prior: &PriorSpec) -> Result<NodeId> {
        let s2 = prior.std * prior.std;
        let var = g.square(self.sigma)?;
        let m2 = g.square(self.mu)?;
        let t = g.add(var, m2)?;
        let t = g.sum(t)?;
        let t = g.scale(t, 1.0 / (2.0 * s2))?;
        let t = g.sub(t, self.sum_rho)?;
        g.offset(t, self.dim as f64 * (prior.std.ln() - 0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_zero() {
        let q = MeanFieldGaussian::new(vec![0.0], vec![0.0]).unwrap();
        assert!((q.log_density(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-15);
        assert!((q.entropy() - 1.418_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn kl_vanishes_at_prior() {
        let q = MeanFieldGaussian::from_sigma(vec![0.0; 3], &[2.0; 3]).unwrap();
        assert!(q.kl_to_prior(&PriorSpec::new(2.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn sample_at_zero_noise_is_mean() {
        let q = MeanFieldGaussian::new(vec![1.0, -2.0], vec![0.3, -0.1]).unwrap();
        assert_eq!(q.sample(&[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        assert!(q.sample(&[0.0]).is_err());
    }

    #[test]
    fn translation_invariance() {
        let q = MeanFieldGaussian::new(vec![1.5, -0.5], vec![0.2, -0.7]).unwrap();
        let q0 = MeanFieldGaussian::new(vec![0.0, 0.0], vec![0.2, -0.7]).unwrap();
        let v = [0.3, 0.9];
        let a = q.log_density(&[1.5 + 0.3, -0.5 + 0.9]).unwrap();
        assert!((a - q0.log_density(&v).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn graph_matches_plain() {
        let q = MeanFieldGaussian::new(vec![0.4, -1.1, 2.0], vec![-0.5, 0.1, 0.3]).unwrap();
        let prior = PriorSpec::new(1.3).unwrap();
        let pts = vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.5];
        let mut g = Graph::new();
        let n = MeanFieldNodes::declare(&mut g, 3).unwrap();
        let w = g.constant(Tensor::matrix(2, 3, pts.clone()).unwrap());
        let lp = n.log_density_rows(&mut g, w).unwrap();
        let h = n.entropy(&mut g).unwrap();
        let kl = n.kl_to_prior(&mut g, &prior).unwrap();
        let mut b = HashMap::new();
        n.bind(&q, &mut b).unwrap();
        let f = g.forward(&b).unwrap();
        for i in 0..2 {
            let want = q.log_density(&pts[i * 3..i * 3 + 3]).unwrap();
            assert!((f.value(lp).data()[i] - want).abs() < 1e-13);
        }
        assert!((f.scalar(h) - q.entropy()).abs() < 1e-13);
        assert!((f.scalar(kl) - q.kl_to_prior(&prior)).abs() < 1e-13);
    }
}
