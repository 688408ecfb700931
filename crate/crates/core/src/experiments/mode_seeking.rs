use serde::{Deserialize, Serialize};

use super::jobs::parallel_map;
use crate::diffcore::fsum;
use crate::error::{invalid, Result};
use crate::rng::{stream, Stream};
use crate::training::fit_reverse_kl;
use crate::variational::{CholeskyGaussian, MixtureTarget};

/// Interpolation level that separates mid-point from mode-seeking fits.
pub const THRESHOLD_LEVEL: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSeekingConfig {
    pub sigmas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub dim: usize,
    pub seeds: usize,
    pub steps: usize,
    pub samples: usize,
    pub lr: f64,
    /// Initial isotropic std; `None` uses the target's `σ`.
    pub init_std: Option<f64>,
    /// Multiply every `α` by `σ`, so one list sweeps all scales.
    pub scale_alphas: bool,
    pub seed: u64,
}

impl Default for ModeSeekingConfig {
    fn default() -> Self {
        ModeSeekingConfig {
            sigmas: vec![1.0],
            alphas: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0],
            dim: 2,
            seeds: 1,
            steps: 3000,
            samples: 5000,
            lr: 1e-2,
            init_std: None,
            scale_alphas: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSeekingRow {
    pub sigma: f64,
    pub alpha: f64,
    pub seed: usize,
    /// `‖μ*‖/α`; empty when `α = 0`.
    pub ratio: Option<f64>,
    pub mu_norm: f64,
    pub det_cov: f64,
    pub final_kl: f64,
}

/// One reverse-KL fit per `(σ, α, seed)`.
pub fn run_mode_seeking(cfg: &ModeSeekingConfig, jobs: usize) -> Result<Vec<ModeSeekingRow>> {
    if cfg.sigmas.is_empty() || cfg.alphas.is_empty() || cfg.seeds == 0 {
        return invalid("sigmas, alphas and seeds must be non-empty");
    }
    let mut points = Vec::new();
    for &sigma in &cfg.sigmas {
        for &a in &cfg.alphas {
            let alpha = if cfg.scale_alphas { a * sigma } else { a };
            for seed in 0..cfg.seeds {
                points.push((sigma, alpha, seed));
            }
        }
    }
    parallel_map(points, jobs, |&(sigma, alpha, seed)| fit_point(cfg, sigma, alpha, seed))
        .into_iter()
        .collect()
}

fn fit_point(cfg: &ModeSeekingConfig, sigma: f64, alpha: f64, seed: usize) -> Result<ModeSeekingRow> {
    let target = MixtureTarget::diagonal(alpha, sigma, cfg.dim)?;
    let q0 = CholeskyGaussian::isotropic(vec![0.0; cfg.dim], cfg.init_std.unwrap_or(sigma))?;
    // The noise stream depends only on the seed, so fits across α are paired.
    let mut rng = stream(cfg.seed, Stream::Noise, seed as u64);
    let (q, hist) = fit_reverse_kl(&target, &q0, cfg.steps, cfg.samples, cfg.lr, &mut rng)?;
    let mu_norm = fsum(q.mu().iter().map(|m| m * m)).sqrt();
    Ok(ModeSeekingRow {
        sigma,
        alpha,
        seed,
        ratio: (alpha > 0.0).then(|| mu_norm / alpha),
        mu_norm,
        det_cov: q.det_cov(),
        final_kl: hist.last().copied().unwrap_or(f64::NAN),
    })
}

/// Smallest `α` where the seed-averaged ratio falls below [`THRESHOLD_LEVEL`],
/// linearly interpolated between the neighbouring sweep points.
pub fn estimate_threshold(rows: &[ModeSeekingRow], sigma: f64) -> Option<f64> {
    let mut alphas: Vec<f64> = rows
        .iter()
        .filter(|r| r.sigma == sigma && r.ratio.is_some())
        .map(|r| r.alpha)
        .collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mean = |a: f64| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.sigma == sigma && r.alpha == a)
            .filter_map(|r| r.ratio)
            .collect();
        fsum(v.iter().copied()) / v.len() as f64
    };
    let curve: Vec<(f64, f64)> = alphas.into_iter().map(|a| (a, mean(a))).collect();
    for w in curve.windows(2) {
        let ((a0, r0), (a1, r1)) = (w[0], w[1]);
        if r0 >= THRESHOLD_LEVEL && r1 < THRESHOLD_LEVEL {
            return Some(a0 + (r0 - THRESHOLD_LEVEL) / (r0 - r1) * (a1 - a0));
        }
    }
    None
}
