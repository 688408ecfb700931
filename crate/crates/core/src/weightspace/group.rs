use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Architecture, WeightVector};
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;

/// One permutation per hidden layer, in one-line notation.
///
/// Hidden unit `i` of `g·ω` is unit `τ(i)` of `ω`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    perms: Vec<Vec<usize>>,
}

fn validate_perm(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return Err(Error::NotBijective(format!("{p:?}")));
        }
        seen[i] = true;
    }
    Ok(())
}

impl GroupElement {
    pub fn new(perms: Vec<Vec<usize>>) -> Result<Self> {
        for p in &perms {
            validate_perm(p)?;
        }
        Ok(GroupElement { perms })
    }

    pub fn identity(arch: &Architecture) -> Self {
        GroupElement {
            perms: arch.hidden_dims().iter().map(|&d| (0..d).collect()).collect(),
        }
    }

    /// Uniform element of the group: an independent Fisher–Yates shuffle per layer.
    pub fn sample_uniform(rng: &mut Rng, arch: &Architecture) -> Self {
        let perms = arch
            .hidden_dims()
            .iter()
            .map(|&d| {
                let mut p: Vec<usize> = (0..d).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        GroupElement { perms }
    }

    /// Every element of a small group, identity first.
    pub fn enumerate(arch: &Architecture, limit: usize) -> Result<Vec<Self>> {
        let mut order: usize = 1;
        for &d in arch.hidden_dims() {
            order = (1..=d)
                .try_fold(order, |acc, k| acc.checked_mul(k))
                .filter(|&o| o <= limit)
                .ok_or_else(|| Error::InvalidArgument(format!("group order exceeds {limit}")))?;
        }
        let mut out = vec![Vec::new()];
        for &d in arch.hidden_dims() {
            let layer = permutations(d);
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<Vec<usize>>| {
                    layer.iter().map(move |p| {
                        let mut v = prefix.clone();
                        v.push(p.clone());
                        v
                    })
                })
                .collect();
        }
        Ok(out.into_iter().map(|perms| GroupElement { perms }).collect())
    }

    pub fn perms(&self) -> &[Vec<usize>] {
        &self.perms
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(|p| p.iter().enumerate().all(|(i, &j)| i == j))
    }

    fn check_compatible(&self, other: &GroupElement) -> Result<()> {
        let a: Vec<usize> = self.perms.iter().map(Vec::len).collect();
        let b: Vec<usize> = other.perms.iter().map(Vec::len).collect();
        if a != b {
            return shape_err(format!("group elements act on layers {a:?} and {b:?}"));
        }
        Ok(())
    }

    /// Check that the element acts on the hidden layers of `arch`.
    pub fn check_arch(&self, arch: &Architecture) -> Result<()> {
        let sizes: Vec<usize> = self.perms.iter().map(Vec::len).collect();
        if sizes != arch.hidden_dims() {
            return shape_err(format!(
                "group element for widths {sizes:?}, architecture has {:?}",
                arch.hidden_dims()
            ));
        }
        Ok(())
    }

    /// `g1 ∘ g2`, so that acting by the result equals acting by `g2` then `g1`.
    pub fn compose(&self, other: &GroupElement) -> Result<Self> {
        self.check_compatible(other)?;
        let perms = self
            .perms
            .iter()
            .zip(&other.perms)
            .map(|(p1, p2)| p1.iter().map(|&i| p2[i]).collect())
            .collect();
        Ok(GroupElement { perms })
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    inv[j] = i;
                }
                inv
            })
            .collect();
        GroupElement { perms }
    }

    /// Index map `p` on the flat weight vector with `(g·ω)[i] = ω[p[i]]`.
    pub fn flat_permutation(&self, arch: &Architecture) -> Result<Vec<usize>> {
        self.check_arch(arch)?;
        let slots = arch.slots();
        let l_total = arch.num_layers();
        let mut out = Vec::with_capacity(arch.num_params());
        for (l, s) in slots.iter().enumerate() {
            // Rows of layer l are units of layer l+1; columns are units of layer l.
            let row_perm = (l + 1 < l_total).then(|| &self.perms[l]);
            let col_perm = (l >= 1).then(|| &self.perms[l - 1]);
            let r = |i: usize| row_perm.map_or(i, |p| p[i]);
            let c = |j: usize| col_perm.map_or(j, |p| p[j]);
            for i in 0..s.rows {
                for j in 0..s.cols {
                    out.push(s.w_offset + r(i) * s.cols + c(j));
                }
            }
            if let Some(b) = s.b_offset {
                out.extend((0..s.rows).map(|i| b + r(i)));
            }
        }
        Ok(out)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    heap_permute(n, &mut p, &mut out);
    // Start from the identity so callers can skip it by position.
    out.sort();
    out
}

fn heap_permute(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(p.clone());
        return;
    }
    for i in 0..k - 1 {
        heap_permute(k - 1, p, out);
        if k % 2 == 0 {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
    heap_permute(k - 1, p, out);
}

/// `g·ω`: permute hidden units, moving entries without recomputing them.
pub fn apply_action(g: &GroupElement, w: &WeightVector) -> Result<WeightVector> {
    let p = g.flat_permutation(w.arch())?;
    let src = w.as_slice();
    WeightVector::new(w.arch(), p.iter().map(|&i| src[i]).collect())
}

/// `g·ω` on a raw flat vector.
pub fn apply_action_flat(g: &GroupElement, arch: &Architecture, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != arch.num_params() {
        return shape_err(format!("{} values for {} parameters", w.len(), arch.num_params()));
    }
    let p = g.flat_permutation(arch)?;
    Ok(p.iter().map(|&i| w[i]).collect())
}
