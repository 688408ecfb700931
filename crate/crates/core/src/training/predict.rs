use crate::diffcore::Tensor;
use crate::error::{shape_err, Result};
use crate::models::{forward, Nonlinearity};
use crate::variational::MeanFieldGaussian;
use crate::weightspace::{apply_action, Architecture, GroupElement};

/// Average network output over weights `μ + σ ⊙ εᵢ`, one draw per row of `eps`.
///
/// When `perms` is given, draw `i` is additionally moved by `perms[i]`, which
/// samples from the symmetrized posterior instead.
pub fn predictive_mean(
    q: &MeanFieldGaussian,
    arch: &Architecture,
    x: &Tensor,
    act: Nonlinearity,
    eps: &Tensor,
    perms: Option<&[GroupElement]>,
) -> Result<Tensor> {
    average(q, arch, x, act, eps, perms, |t| t)
}

/// Average of per-draw softmax probabilities.
pub fn predictive_probs(
    q: &MeanFieldGaussian,
    arch: &Architecture,
    x: &Tensor,
    act: Nonlinearity,
    eps: &Tensor,
) -> Result<Tensor> {
    average(q, arch, x, act, eps, None, softmax_rows)
}

fn average(
    q: &MeanFieldGaussian,
    arch: &Architecture,
    x: &Tensor,
    act: Nonlinearity,
    eps: &Tensor,
    perms: Option<&[GroupElement]>,
    post: impl Fn(Tensor) -> Tensor,
) -> Result<Tensor> {
    q.check_arch(arch)?;
    let s = eps.rows();
    if let Some(p) = perms {
        if p.len() != s {
            return shape_err(format!("{} group elements for {s} draws", p.len()));
        }
    }
    let mut acc: Option<Vec<f64>> = None;
    for i in 0..s {
        let mut w = q.sample_weights(arch, eps.row(i))?;
        if let Some(p) = perms {
            w = apply_action(&p[i], &w)?;
        }
        let out = post(forward(&w, x, act)?);
        match acc.as_mut() {
            Some(a) => a.iter_mut().zip(out.data()).for_each(|(a, o)| *a += o),
            None => acc = Some(out.into_data()),
        }
    }
    let mut acc = acc.unwrap_or_default();
    acc.iter_mut().for_each(|a| *a /= s as f64);
    Tensor::matrix(x.rows(), arch.output_dim(), acc)
}

pub fn softmax_rows(t: Tensor) -> Tensor {
    let c = t.cols();
    let mut data = t.into_data();
    for row in data.chunks_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    let rows = data.len() / c.max(1);
    Tensor::matrix(rows, c, data).expect("shape preserved")
}

/// Mean squared error over all entries.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return shape_err(format!("{:?} vs {:?}", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    Ok(crate::diffcore::fsum(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t))) / n)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return shape_err(format!("{} rows, {} labels", probs.rows(), labels.len()));
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| {
            let row = probs.row(*i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == y
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
