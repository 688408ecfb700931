use serde::{Deserialize, Serialize};

use crate::diffcore::fsum;
use crate::error::{invalid, Result};
use crate::rng::{normals, stream, Stream};
use crate::weightspace::{
    nearest_nontrivial, proximity_bound, Architecture, SearchMode, WeightVector, BRUTE_FORCE_MAX_WIDTH,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    /// Hidden widths, each with one input and one output.
    pub widths: Vec<usize>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        ProximityConfig {
            widths: vec![4, 8, 16, 64, 256],
            input_dim: 1,
            output_dim: 1,
            trials: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityRow {
    pub width: usize,
    pub num_params: usize,
    pub mode: SearchMode,
    pub trials: usize,
    /// Nearest distance over `‖ω‖`.
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub bound_ratio: f64,
    pub violations: usize,
}

pub fn search_mode_for(width: usize) -> SearchMode {
    if width <= BRUTE_FORCE_MAX_WIDTH {
        SearchMode::BruteForce
    } else {
        SearchMode::TranspositionScan
    }
}

/// Nearest non-trivial permutation of standard-Gaussian weights versus the bound.
pub fn run_proximity(cfg: &ProximityConfig) -> Result<Vec<ProximityRow>> {
    if cfg.widths.is_empty() || cfg.trials == 0 {
        return invalid("widths and trials must be non-empty");
    }
    if let Some(w) = cfg.widths.iter().find(|&&w| w < 3) {
        return invalid(format!("hidden width must be at least 3, got {w}"));
    }
    cfg.widths
        .iter()
        .enumerate()
        .map(|(job, &width)| {
            let arch = Architecture::mlp(&[cfg.input_dim, width, cfg.output_dim])?;
            let d = arch.num_params();
            let mode = search_mode_for(width);
            let mut rng = stream(cfg.seed, Stream::Init, job as u64);
            let bound_ratio = proximity_bound(&arch, 1.0)?;
            let mut ratios = Vec::with_capacity(cfg.trials);
            let mut violations = 0;
            for _ in 0..cfg.trials {
                let w = WeightVector::new(&arch, normals(&mut rng, d))?;
                let norm = w.norm();
                let (_, dist) = nearest_nontrivial(&w, mode)?;
                if dist > proximity_bound(&arch, norm)? {
                    violations += 1;
                }
                ratios.push(dist / norm);
            }
            Ok(ProximityRow {
                width,
                num_params: d,
                mode,
                trials: cfg.trials,
                mean_ratio: fsum(ratios.iter().copied()) / cfg.trials as f64,
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
                bound_ratio,
                violations,
            })
        })
        .collect()
}
