#![allow(dead_code)]

use symvi::experiments::GridSpec;

/// `H(q^G)` for a diagonal Gaussian on the two-weight toy, whose group swaps
/// the two weights, by trapezoid quadrature on a square grid.
pub fn toy_symmetric_entropy(mu: [f64; 2], sigma: [f64; 2], n: usize) -> f64 {
    let c = mu.iter().map(|m| m.abs()).fold(0.0, f64::max) + 12.0 * sigma.iter().copied().fold(0.0, f64::max);
    let grid = GridSpec { c, n };
    let q = |a: f64, b: f64| {
        let za = (a - mu[0]) / sigma[0];
        let zb = (b - mu[1]) / sigma[1];
        (-0.5 * (za * za + zb * zb)).exp() / (2.0 * std::f64::consts::PI * sigma[0] * sigma[1])
    };
    let integrand = grid.map(|a, b| {
        let p = 0.5 * (q(a, b) + q(b, a));
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    });
    grid.integrate(&integrand)
}

pub fn gaussian_entropy(sigma: &[f64]) -> f64 {
    sigma
        .iter()
        .map(|s| 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s * s).ln())
        .sum()
}

/// Mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
