use serde::{Deserialize, Serialize};

use super::{Architecture, GroupElement, WeightVector};
use crate::diffcore::fsum;
use crate::error::{invalid, Result};

/// Largest hidden width searched exhaustively.
pub const BRUTE_FORCE_MAX_WIDTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    TranspositionScan,
    BruteForce,
}

fn single_hidden_width(arch: &Architecture) -> Result<usize> {
    match arch.hidden_dims() {
        [d] => Ok(*d),
        h => invalid(format!("expected one hidden layer, got widths {h:?}")),
    }
}

/// Per-unit parameter vectors: incoming weights, bias, outgoing weights.
fn unit_vectors(w: &WeightVector) -> Vec<Vec<f64>> {
    let arch = w.arch();
    let (d_h, d_o) = (arch.dims()[1], arch.dims()[2]);
    let trainable_out = arch.num_trainable_layers() == 2;
    let w1 = w.weights(0);
    let d_i = arch.dims()[0];
    (0..d_h)
        .map(|i| {
            let mut u = w1[i * d_i..(i + 1) * d_i].to_vec();
            if let Some(b) = w.bias(0) {
                u.push(b[i]);
            }
            if trainable_out {
                let w2 = w.weights(1);
                u.extend((0..d_o).map(|r| w2[r * d_h + i]));
            }
            u
        })
        .collect()
}

fn pairwise_sq(units: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = units.len();
    let mut c = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let d = fsum(units[a].iter().zip(&units[b]).map(|(x, y)| (x - y) * (x - y)));
            c[a][b] = d;
            c[b][a] = d;
        }
    }
    c
}

/// Non-identity element minimising `‖ω − g·ω‖₂` within the searched class.
///
/// Only single-hidden-layer networks are supported. Brute force is limited to
/// widths up to [`BRUTE_FORCE_MAX_WIDTH`].
pub fn nearest_nontrivial(w: &WeightVector, mode: SearchMode) -> Result<(GroupElement, f64)> {
    let d_h = single_hidden_width(w.arch())?;
    if d_h < 2 {
        return invalid("no non-trivial permutation of a single hidden unit");
    }
    let cost = pairwise_sq(&unit_vectors(w));
    match mode {
        SearchMode::TranspositionScan => {
            let mut best = (0, 1, f64::INFINITY);
            for a in 0..d_h {
                for b in a + 1..d_h {
                    if cost[a][b] < best.2 {
                        best = (a, b, cost[a][b]);
                    }
                }
            }
            let mut p: Vec<usize> = (0..d_h).collect();
            p.swap(best.0, best.1);
            Ok((GroupElement::new(vec![p])?, (2.0 * best.2).sqrt()))
        }
        SearchMode::BruteForce => {
            if d_h > BRUTE_FORCE_MAX_WIDTH {
                return invalid(format!(
                    "brute force is limited to width {BRUTE_FORCE_MAX_WIDTH}, got {d_h}"
                ));
            }
            let mut best: Option<(Vec<usize>, f64)> = None;
            let mut p: Vec<usize> = (0..d_h).collect();
            // Lexicographic successor enumeration; the identity comes first and is skipped.
            while next_permutation(&mut p) {
                let d = fsum(p.iter().enumerate().map(|(i, &j)| cost[i][j]));
                if best.as_ref().is_none_or(|(_, b)| d < *b) {
                    best = Some((p.clone(), d));
                }
            }
            let (p, d) = best.expect("width ≥ 2 has a non-identity permutation");
            Ok((GroupElement::new(vec![p])?, d.sqrt()))
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    fsum((2..=n).map(|k| (k as f64).ln()))
}

/// Pigeonhole radius bound `2·D/ln(d_h!)·‖ω‖` on the nearest non-trivial permutation.
pub fn proximity_bound(arch: &Architecture, norm: f64) -> Result<f64> {
    let d_h = single_hidden_width(arch)?;
    if d_h < 2 {
        return invalid("bound needs at least two hidden units");
    }
    Ok(2.0 * arch.num_params() as f64 / ln_factorial(d_h) * norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_arithmetic() {
        let a = Architecture::mlp(&[1, 2, 1]).unwrap();
        assert_eq!(proximity_bound(&a, 0.0).unwrap(), 0.0);
        let b = proximity_bound(&a, 1.0).unwrap();
        assert!((b - 14.0 / std::f64::consts::LN_2).abs() < 1e-12);
        assert!((b - 20.198).abs() < 1e-2);
        assert!(proximity_bound(&Architecture::mlp(&[1, 1, 1]).unwrap(), 1.0).is_err());
    }

    #[test]
    fn duplicate_units_are_at_distance_zero() {
        let a = Architecture::mlp(&[1, 3, 1]).unwrap();
        // units: (w, b, v) = (1, 2, 3), (5, 6, 7), (1, 2, 3)
        let w = WeightVector::from_layers(
            &a,
            &[
                (vec![1.0, 5.0, 1.0], Some(vec![2.0, 6.0, 2.0])),
                (vec![3.0, 7.0, 3.0], Some(vec![0.5])),
            ],
        )
        .unwrap();
        for mode in [SearchMode::BruteForce, SearchMode::TranspositionScan] {
            let (g, d) = nearest_nontrivial(&w, mode).unwrap();
            assert_eq!(d, 0.0);
            assert_eq!(g.perms()[0], vec![2, 1, 0]);
        }
    }

    #[test]
    fn ln_factorial_small() {
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn next_permutation_counts() {
        let mut p = vec![0, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut p) {
            n += 1;
        }
        assert_eq!(n, 24);
    }
}
