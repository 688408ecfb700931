use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fixed (non-trainable) output layer.
///
/// Hidden-unit permutations act on its columns, so every row must be constant
/// for the network to stay permutation-symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedLayer {
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

/// Layer dimensions `[d₀, d₁, …, d_L]` of an MLP, with per-layer bias flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    dims: Vec<usize>,
    has_bias: Vec<bool>,
    fixed_output: Option<FixedLayer>,
}

/// Where one layer lives inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub rows: usize,
    pub cols: usize,
    pub w_offset: usize,
    pub b_offset: Option<usize>,
}

impl Architecture {
    /// MLP with biases on every layer.
    pub fn mlp(dims: &[usize]) -> Result<Self> {
        Self::new(dims, &vec![true; dims.len().saturating_sub(1)])
    }

    pub fn new(dims: &[usize], has_bias: &[bool]) -> Result<Self> {
        if dims.len() < 2 {
            return invalid(format!("an MLP needs at least two dims, got {dims:?}"));
        }
        if dims.contains(&0) {
            return invalid(format!("all dims must be positive, got {dims:?}"));
        }
        if has_bias.len() != dims.len() - 1 {
            return invalid(format!("{} bias flags for {} layers", has_bias.len(), dims.len() - 1));
        }
        Ok(Architecture {
            dims: dims.to_vec(),
            has_bias: has_bias.to_vec(),
            fixed_output: None,
        })
    }

    /// Freeze the output layer to the given values. They are excluded from
    /// the weight vector.
    pub fn with_fixed_output(mut self, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        let l = self.num_layers();
        if l < 2 {
            return invalid("freezing the output layer needs a hidden layer");
        }
        let (rows, cols) = (self.dims[l], self.dims[l - 1]);
        if weights.len() != rows * cols {
            return invalid(format!(
                "fixed output needs {} weights, got {}",
                rows * cols,
                weights.len()
            ));
        }
        for r in 0..rows {
            let row = &weights[r * cols..(r + 1) * cols];
            if row.iter().any(|&w| w != row[0]) {
                return invalid("fixed output rows must be constant to keep permutation symmetry");
            }
        }
        match (&bias, self.has_bias[l - 1]) {
            (Some(b), true) if b.len() == rows => {}
            (None, false) => {}
            _ => return invalid("fixed output bias does not match the bias flag"),
        }
        self.fixed_output = Some(FixedLayer { weights, bias });
        Ok(self)
    }

    /// The two-parameter model `f(x) = relu(w₁x) + relu(w₂x)`.
    pub fn toy() -> Self {
        Architecture::new(&[1, 2, 1], &[false, false])
            .and_then(|a| a.with_fixed_output(vec![1.0, 1.0], None))
            .expect("toy architecture is valid")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Number of affine layers `L`.
    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Widths of the hidden layers `d₁ … d_{L−1}`.
    pub fn hidden_dims(&self) -> &[usize] {
        &self.dims[1..self.dims.len() - 1]
    }

    pub fn has_bias(&self, layer: usize) -> bool {
        self.has_bias[layer]
    }

    pub fn fixed_output(&self) -> Option<&FixedLayer> {
        self.fixed_output.as_ref()
    }

    /// Layers whose parameters live in the weight vector.
    pub fn num_trainable_layers(&self) -> usize {
        self.num_layers() - usize::from(self.fixed_output.is_some())
    }

    /// Flat layout: `[W_l row-major, b_l]` per trainable layer.
    pub fn slots(&self) -> Vec<LayerSlot> {
        let mut off = 0;
        (0..self.num_trainable_layers())
            .map(|l| {
                let (rows, cols) = (self.dims[l + 1], self.dims[l]);
                let w_offset = off;
                off += rows * cols;
                let b_offset = if self.has_bias[l] {
                    let b = off;
                    off += rows;
                    Some(b)
                } else {
                    None
                };
                LayerSlot {
                    rows,
                    cols,
                    w_offset,
                    b_offset,
                }
            })
            .collect()
    }

    /// Weight-space dimension `D`.
    pub fn num_params(&self) -> usize {
        self.slots()
            .iter()
            .map(|s| s.rows * s.cols + if s.b_offset.is_some() { s.rows } else { 0 })
            .sum()
    }

    /// Fan-in of every trainable parameter, in flat order.
    pub fn fan_in(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in self.slots() {
            out.extend(std::iter::repeat_n(s.cols, s.rows * s.cols));
            if s.b_offset.is_some() {
                out.extend(std::iter::repeat_n(s.cols, s.rows));
            }
        }
        out
    }
}
