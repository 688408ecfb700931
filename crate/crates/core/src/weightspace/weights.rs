use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::diffcore::fsum;
use crate::error::{shape_err, Result};

/// Flat trainable parameters of an MLP with a per-layer view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    arch: Architecture,
    data: Vec<f64>,
}

impl WeightVector {
    pub fn new(arch: &Architecture, data: Vec<f64>) -> Result<Self> {
        if data.len() != arch.num_params() {
            return shape_err(format!(
                "architecture {:?} has {} parameters, got {}",
                arch.dims(),
                arch.num_params(),
                data.len()
            ));
        }
        Ok(WeightVector {
            arch: arch.clone(),
            data,
        })
    }

    pub fn zeros(arch: &Architecture) -> Self {
        WeightVector {
            arch: arch.clone(),
            data: vec![0.0; arch.num_params()],
        }
    }

    /// Build from per-layer `(W_l, b_l)` of the trainable layers.
    pub fn from_layers(arch: &Architecture, layers: &[(Vec<f64>, Option<Vec<f64>>)]) -> Result<Self> {
        let slots = arch.slots();
        if layers.len() != slots.len() {
            return shape_err(format!("{} layers given, {} expected", layers.len(), slots.len()));
        }
        let mut data = Vec::with_capacity(arch.num_params());
        for (l, ((w, b), s)) in layers.iter().zip(&slots).enumerate() {
            if w.len() != s.rows * s.cols {
                return shape_err(format!(
                    "layer {l} weights: {} values for {}x{}",
                    w.len(),
                    s.rows,
                    s.cols
                ));
            }
            data.extend_from_slice(w);
            match (b, s.b_offset) {
                (Some(b), Some(_)) if b.len() == s.rows => data.extend_from_slice(b),
                (None, None) => {}
                _ => return shape_err(format!("layer {l} bias does not match the architecture")),
            }
        }
        WeightVector::new(arch, data)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Weights of layer `l` (`d_{l+1} × d_l`, row-major), including a fixed output layer.
    pub fn weights(&self, l: usize) -> &[f64] {
        let slots = self.arch.slots();
        match slots.get(l) {
            Some(s) => &self.data[s.w_offset..s.w_offset + s.rows * s.cols],
            None => &self.arch.fixed_output().expect("layer index in range").weights,
        }
    }

    pub fn bias(&self, l: usize) -> Option<&[f64]> {
        let slots = self.arch.slots();
        match slots.get(l) {
            Some(s) => s.b_offset.map(|b| &self.data[b..b + s.rows]),
            None => self.arch.fixed_output().and_then(|f| f.bias.as_deref()),
        }
    }

    /// Per-layer copies of the trainable layers.
    pub fn to_layers(&self) -> Vec<(Vec<f64>, Option<Vec<f64>>)> {
        (0..self.arch.num_trainable_layers())
            .map(|l| (self.weights(l).to_vec(), self.bias(l).map(<[f64]>::to_vec)))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        fsum(self.data.iter().map(|x| x * x)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_round_trip() {
        let a = Architecture::mlp(&[2, 3, 1]).unwrap();
        let data: Vec<f64> = (0..a.num_params()).map(|i| i as f64 * 0.37 - 1.0).collect();
        let w = WeightVector::new(&a, data.clone()).unwrap();
        let back = WeightVector::from_layers(&a, &w.to_layers()).unwrap();
        assert_eq!(back.as_slice(), data.as_slice());
        assert_eq!(w.weights(1), &data[9..12]);
        assert_eq!(w.bias(1).unwrap(), &data[12..13]);
    }

    #[test]
    fn fixed_output_view() {
        let w = WeightVector::new(&Architecture::toy(), vec![0.3, -0.3]).unwrap();
        assert_eq!(w.weights(1), &[1.0, 1.0]);
        assert_eq!(w.bias(0), None);
        assert!(WeightVector::new(&Architecture::toy(), vec![0.0; 3]).is_err());
    }
}
