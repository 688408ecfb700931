//! MLP forward passes and likelihoods, as plain functions and as graph builders.

use serde::{Deserialize, Serialize};

use crate::diffcore::{fsum, gemm, logsumexp, Graph, NodeId, Tensor};
use crate::error::{invalid, shape_err, Result};
use crate::weightspace::{Architecture, WeightVector};

/// Activation applied after every hidden layer. The output layer stays affine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
        }
    }

    fn node(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Nonlinearity::Relu => g.relu(x),
            Nonlinearity::Tanh => g.tanh(x),
            Nonlinearity::Identity => Ok(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LikelihoodSpec {
    SoftmaxClassification,
    GaussianRegression { noise_std: f64 },
}

impl LikelihoodSpec {
    pub fn regression(noise_std: f64) -> Result<Self> {
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return invalid(format!("noise_std must be positive, got {noise_std}"));
        }
        Ok(LikelihoodSpec::GaussianRegression { noise_std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `idx` of the targets.
    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Values(t) => Targets::Values(select_rows(t, idx)),
        }
    }
}

pub(crate) fn select_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let c = t.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::matrix(idx.len(), c, data).expect("row selection keeps the column count")
}

/// A minibatch of `M` points drawn from a dataset of `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Targets,
    pub dataset_size: usize,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Targets, dataset_size: usize) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return shape_err(format!("inputs must be a matrix, got {:?}", inputs.shape()));
        }
        let m = inputs.rows();
        if m == 0 {
            return invalid("empty batch");
        }
        if targets.len() != m {
            return shape_err(format!("{m} inputs but {} targets", targets.len()));
        }
        if dataset_size < m {
            return invalid(format!("dataset size {dataset_size} below batch size {m}"));
        }
        Ok(Batch {
            inputs,
            targets,
            dataset_size,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whole dataset scale factor `N/M`.
    pub fn scale(&self) -> f64 {
        self.dataset_size as f64 / self.len() as f64
    }
}

/// Evaluate the MLP on each row of `x`.
pub fn forward(w: &WeightVector, x: &Tensor, act: Nonlinearity) -> Result<Tensor> {
    let arch = w.arch();
    if x.shape().len() != 2 || x.cols() != arch.input_dim() {
        return shape_err(format!(
            "input {:?} for input dimension {}",
            x.shape(),
            arch.input_dim()
        ));
    }
    let m = x.rows();
    let mut h = x.data().to_vec();
    let l_total = arch.num_layers();
    for l in 0..l_total {
        let (k, n) = (arch.dims()[l], arch.dims()[l + 1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &h, false, w.weights(l), true, &mut out, false);
        if let Some(b) = w.bias(l) {
            for row in out.chunks_mut(n) {
                for (o, bi) in row.iter_mut().zip(b) {
                    *o += bi;
                }
            }
        }
        if l + 1 < l_total {
            out.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        h = out;
    }
    Tensor::matrix(m, arch.output_dim(), h)
}

/// Graph version of [`forward`]; `w` is a flat `[D]` node.
pub fn forward_graph(g: &mut Graph, arch: &Architecture, w: NodeId, x: NodeId, act: Nonlinearity) -> Result<NodeId> {
    if g.shape(w) != [arch.num_params()] {
        return shape_err(format!(
            "weight node {:?} for {} parameters",
            g.shape(w),
            arch.num_params()
        ));
    }
    let xs = g.shape(x).to_vec();
    if xs.len() != 2 || xs[1] != arch.input_dim() {
        return shape_err(format!("input {xs:?} for input dimension {}", arch.input_dim()));
    }
    let slots = arch.slots();
    let l_total = arch.num_layers();
    let mut h = x;
    for l in 0..l_total {
        let (wl, bl) = match slots.get(l) {
            Some(s) => {
                let wl = g.slice(w, s.w_offset, &[s.rows, s.cols])?;
                let bl = match s.b_offset {
                    Some(b) => Some(g.slice(w, b, &[s.rows])?),
                    None => None,
                };
                (wl, bl)
            }
            None => {
                let f = arch.fixed_output().expect("non-trainable layer is the fixed output");
                let (rows, cols) = (arch.dims()[l + 1], arch.dims()[l]);
                let wl = g.constant(Tensor::matrix(rows, cols, f.weights.clone())?);
                let bl = f.bias.as_ref().map(|b| g.constant(Tensor::vector(b.clone())));
                (wl, bl)
            }
        };
        h = g.matmul_t(h, wl)?;
        if let Some(b) = bl {
            h = g.add(h, b)?;
        }
        if l + 1 < l_total {
            h = act.node(g, h)?;
        }
    }
    Ok(h)
}

fn check_targets(spec: &LikelihoodSpec, outputs: &[usize], targets: &Targets) -> Result<()> {
    if outputs.len() != 2 {
        return shape_err(format!("outputs must be a matrix, got {outputs:?}"));
    }
    let (m, c) = (outputs[0], outputs[1]);
    match (spec, targets) {
        (LikelihoodSpec::SoftmaxClassification, Targets::Classes(y)) => {
            if y.len() != m {
                return shape_err(format!("{m} outputs but {} labels", y.len()));
            }
            if let Some(&bad) = y.iter().find(|&&k| k >= c) {
                return invalid(format!("class {bad} out of range for {c} classes"));
            }
        }
        (LikelihoodSpec::GaussianRegression { noise_std }, Targets::Values(t)) => {
            if !(*noise_std > 0.0) {
                return invalid("noise_std must be positive");
            }
            if t.shape() != outputs {
                return shape_err(format!("outputs {outputs:?} but targets {:?}", t.shape()));
            }
        }
        _ => return invalid("targets do not match the likelihood kind"),
    }
    Ok(())
}

/// `Σᵢ log p(yᵢ | f(xᵢ))` over the batch.
pub fn log_likelihood(spec: &LikelihoodSpec, outputs: &Tensor, targets: &Targets) -> Result<f64> {
    check_targets(spec, outputs.shape(), targets)?;
    Ok(match (spec, targets) {
        (LikelihoodSpec::SoftmaxClassification, Targets::Classes(y)) => {
            let mut terms = Vec::with_capacity(y.len());
            for (i, &k) in y.iter().enumerate() {
                let row = outputs.row(i);
                terms.push(row[k] - logsumexp(row)?);
            }
            fsum(terms)
        }
        (LikelihoodSpec::GaussianRegression { noise_std }, Targets::Values(t)) => {
            let var = noise_std * noise_std;
            let c = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
            let sq = fsum(outputs.data().iter().zip(t.data()).map(|(f, y)| (y - f) * (y - f)));
            c * t.len() as f64 - sq / (2.0 * var)
        }
        _ => unreachable!("checked above"),
    })
}

/// Graph version of [`log_likelihood`].
pub fn log_likelihood_graph(
    g: &mut Graph,
    spec: &LikelihoodSpec,
    outputs: NodeId,
    targets: &Targets,
) -> Result<NodeId> {
    let shape = g.shape(outputs).to_vec();
    check_targets(spec, &shape, targets)?;
    match (spec, targets) {
        (LikelihoodSpec::SoftmaxClassification, Targets::Classes(y)) => {
            let picked = g.pick(outputs, y)?;
            let lse = g.logsumexp_rows(outputs)?;
            let d = g.sub(picked, lse)?;
            g.sum(d)
        }
        (LikelihoodSpec::GaussianRegression { noise_std }, Targets::Values(t)) => {
            let var = noise_std * noise_std;
            let c = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
            let y = g.constant(t.clone());
            let r = g.sub(outputs, y)?;
            let sq = g.square(r)?;
            let s = g.sum(sq)?;
            let s = g.scale(s, -1.0 / (2.0 * var))?;
            g.offset(s, c * t.len() as f64)
        }
        _ => unreachable!("checked above"),
    }
}
