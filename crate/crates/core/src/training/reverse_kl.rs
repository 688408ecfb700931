use std::collections::HashMap;

use crate::diffcore::{Graph, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::rng::{normals, Rng};
use crate::variational::{CholeskyGaussian, CholeskyNodes, MixtureTarget};

/// Minimise `KL(q ‖ p) ≈ (1/S) Σ [log q(xᵢ) − log p(xᵢ)]` over a full-covariance
/// Gaussian by plain gradient descent on reparameterised draws.
///
/// Returns the fitted Gaussian and the per-step estimate.
pub fn fit_reverse_kl(
    target: &MixtureTarget,
    q: &CholeskyGaussian,
    steps: usize,
    samples: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<(CholeskyGaussian, Vec<f64>)> {
    let d = target.dim();
    if q.dim() != d {
        return shape_err(format!("{}-d Gaussian for a {d}-d target", q.dim()));
    }
    let mut mu = q.mu().to_vec();
    let mut raw = q.chol_raw().to_vec();
    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let eps = Tensor::matrix(samples, d, normals(rng, samples * d))?;
        let mut g = Graph::new();
        let nodes = CholeskyNodes::declare(&mut g, d)?;
        let e = g.constant(eps.clone());
        let x = nodes.sample(&mut g, e)?;
        let lq = nodes.mean_log_density_of_draws(&mut g, &eps)?;
        let lp = target.log_density_rows(&mut g, x)?;
        let lp = g.sum(lp)?;
        let lp = g.scale(lp, 1.0 / samples as f64)?;
        let kl = g.sub(lq, lp)?;
        g.set_output(kl)?;

        let current = CholeskyGaussian::new(mu.clone(), raw.clone())?;
        let mut b = HashMap::new();
        nodes.bind(&current, &mut b)?;
        let fwd = g.forward(&b)?;
        let value = fwd.output()?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("KL estimate {value} at step {step}")));
        }
        history.push(value);
        let grads = fwd.backward()?;
        let gm = grads.get(nodes.mu).expect("mu is a parameter").data();
        let gr = grads.get(nodes.raw).expect("factor is a parameter").data();
        for (p, gi) in mu.iter_mut().zip(gm) {
            *p -= lr * gi;
        }
        for (p, gi) in raw.iter_mut().zip(gr) {
            *p -= lr * gi;
        }
    }
    Ok((CholeskyGaussian::new(mu, raw)?, history))
}
