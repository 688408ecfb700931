//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Build a [`Graph`], bind its parameters, and call [`eval_and_grad`]. Graphs
//! are cheap and meant to be rebuilt for every optimization step.

mod fsum;
mod graph;
mod tensor;

pub use fsum::fsum;
pub use graph::{eval_and_grad, Forward, Gradients, Graph, NodeId};
pub(crate) use tensor::gemm;
pub use tensor::{matmul, Tensor};

use crate::error::{invalid, Result};

/// `log Σ exp(vᵢ)`, shifted by the maximum.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("logsumexp of an empty slice");
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Ok(m);
    }
    Ok(m + fsum(values.iter().map(|&v| (v - m).exp())).ln())
}

/// `log (1/n) Σ exp(vᵢ)`. Equal inputs return that value exactly.
pub fn logmeanexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("logmeanexp of an empty slice");
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Ok(m);
    }
    let s = fsum(values.iter().map(|&v| (v - m).exp()));
    Ok(m + (s / values.len() as f64).ln())
}
