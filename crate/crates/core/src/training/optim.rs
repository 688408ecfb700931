use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates of Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

fn check(params: &[f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() {
        return shape_err(format!("{} parameters, {} gradients", params.len(), grads.len()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i} is {}", grads[i])));
    }
    Ok(())
}

/// One bias-corrected Adam step, descending `grads`. Leaves everything
/// untouched when a gradient is non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    check(params, grads)?;
    if state.m.len() != params.len() {
        return shape_err("optimizer state does not match parameters");
    }
    let (b1, b2) = betas;
    state.t += 1;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
    Ok(())
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Optimizer with its state.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam {
        state: AdamState,
        betas: (f64, f64),
        eps: f64,
    },
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Adam { beta1, beta2, eps } => Optimizer::Adam {
                state: AdamState::new(n),
                betas: (beta1, beta2),
                eps,
            },
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        match self {
            Optimizer::Adam { state, betas, eps } => adam_step(params, grads, state, lr, *betas, *eps),
            Optimizer::Sgd => sgd_step(params, grads, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        s.m = vec![0.5, 0.5];
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1, (0.9, 0.999), 1e-8).unwrap();
        assert_eq!(s.m, vec![0.45, 0.45]);
        // Moments are non-zero, so the parameters still move; with fresh state they would not.
        let mut q = vec![1.0, -2.0];
        let mut fresh = AdamState::new(2);
        adam_step(&mut q, &[0.0, 0.0], &mut fresh, 0.1, (0.9, 0.999), 1e-8).unwrap();
        assert_eq!(q, vec![1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_gives_lr_sized_steps() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        for _ in 0..1000 {
            let before = p[0];
            adam_step(&mut p, &[3.0], &mut s, 0.01, (0.9, 0.999), 1e-8).unwrap();
            assert!(((before - p[0]) - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::NAN], &mut s, 0.1, (0.9, 0.999), 1e-8).is_err());
        assert_eq!(p, vec![1.0]);
        assert_eq!(s.t, 0);
    }
}
