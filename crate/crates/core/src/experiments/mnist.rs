use serde::{Deserialize, Serialize};

use super::idx::{MnistDataset, MnistSplit};
use super::jobs::parallel_map;
use super::toy::Method;
use crate::diffcore::{fsum, Tensor};
use crate::error::{invalid, Result};
use crate::models::{Batch, LikelihoodSpec, Nonlinearity, Targets};
use crate::rng::{normals, stream, Stream};
use crate::training::{accuracy, predictive_probs, train, OptimizerKind, TrainConfig};
use crate::variational::MuInit;
use crate::weightspace::Architecture;

const EVAL_CHUNK: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnistConfig {
    pub hidden: Vec<usize>,
    /// SGM values of K; MFVI is always trained alongside.
    pub ks: Vec<usize>,
    pub seeds: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub eval_samples: usize,
    pub train_samples: usize,
    pub prior_std: f64,
    /// Initial posterior std of every weight.
    pub sigma_init: f64,
    /// Train on the first `subset` images only.
    pub subset: Option<usize>,
    pub seed: u64,
}

impl Default for MnistConfig {
    fn default() -> Self {
        MnistConfig {
            hidden: vec![10, 30],
            ks: vec![20],
            seeds: 5,
            epochs: 10,
            batch: 100,
            lr: 1e-3,
            eval_samples: 1000,
            train_samples: 1,
            prior_std: 1.0,
            sigma_init: 1e-3,
            subset: None,
            seed: 0,
        }
    }
}

impl MnistConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.seeds == 0 {
            return invalid("hidden sizes and seeds must be non-empty");
        }
        if self.ks.contains(&0) {
            return invalid("K must be at least 1");
        }
        if self.eval_samples == 0 || self.batch == 0 {
            return invalid("eval samples and batch size must be at least 1");
        }
        if self.hidden.contains(&0) {
            return invalid("hidden width must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnistRow {
    pub hidden: usize,
    pub method: Method,
    pub k: usize,
    pub seed: usize,
    pub train_size: usize,
    pub accuracy: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnistSummary {
    pub hidden: usize,
    pub method: Method,
    pub k: usize,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

fn to_batch(split: &MnistSplit) -> Result<Batch> {
    Batch::new(
        split.images.clone(),
        Targets::Classes(split.labels.clone()),
        split.len(),
    )
}

/// Train MFVI and SGM for every hidden width and K, and report test accuracy
/// of the probability-averaged predictive.
pub fn run_mnist(data: &MnistDataset, cfg: &MnistConfig, jobs: usize) -> Result<(Vec<MnistRow>, Vec<MnistSummary>)> {
    cfg.validate()?;
    let train_split = match cfg.subset {
        Some(n) => data.train.head(n),
        None => data.train.clone(),
    };
    let train_set = to_batch(&train_split)?;
    let input_dim = train_set.inputs.cols();

    let mut variants = vec![(Method::Mfvi, 1)];
    variants.extend(cfg.ks.iter().map(|&k| (Method::Sgm, k)));
    let mut points = Vec::new();
    for &h in &cfg.hidden {
        for &(m, k) in &variants {
            for s in 0..cfg.seeds {
                points.push((h, m, k, s));
            }
        }
    }

    let rows: Vec<MnistRow> = parallel_map(points, jobs, |&(h, method, k, s)| -> Result<MnistRow> {
        let arch = Architecture::mlp(&[input_dim, h, 10])?;
        let tc = TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch,
            learning_rate: cfg.lr,
            optimizer: OptimizerKind::adam(),
            seed: cfg.seed,
            job: s as u64,
            samples: cfg.train_samples,
            k,
            prior_std: cfg.prior_std,
            mu_init: MuInit::FanIn,
            rho_init: cfg.sigma_init.ln(),
            act: Nonlinearity::Relu,
            eval_samples: cfg.eval_samples,
        };
        let (q, hist) = train(&train_set, &arch, &LikelihoodSpec::SoftmaxClassification, &tc)?;
        let d = arch.num_params();
        let mut rng = stream(cfg.seed, Stream::Eval, s as u64);
        // Draws are generated in chunks to bound memory at large D.
        let mut total: Option<Tensor> = None;
        let mut left = cfg.eval_samples;
        while left > 0 {
            let c = left.min(EVAL_CHUNK);
            let eps = Tensor::matrix(c, d, normals(&mut rng, c * d))?;
            let p = predictive_probs(&q, &arch, &data.test.images, Nonlinearity::Relu, &eps)?;
            match total.as_mut() {
                Some(t) => t
                    .data_mut()
                    .iter_mut()
                    .zip(p.data())
                    .for_each(|(t, p)| *t += p * c as f64),
                None => {
                    let mut p = p;
                    p.data_mut().iter_mut().for_each(|v| *v *= c as f64);
                    total = Some(p);
                }
            }
            left -= c;
        }
        let mut probs = total.expect("eval_samples ≥ 1");
        probs.data_mut().iter_mut().for_each(|v| *v /= cfg.eval_samples as f64);
        Ok(MnistRow {
            hidden: h,
            method,
            k,
            seed: s,
            train_size: train_set.len(),
            accuracy: accuracy(&probs, &data.test.labels)?,
            final_loss: hist.steps.last().map(|r| r.loss).unwrap_or(f64::NAN),
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut summary = Vec::new();
    for &h in &cfg.hidden {
        for &(m, k) in &variants {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.hidden == h && r.method == m && r.k == k)
                .map(|r| r.accuracy)
                .collect();
            let n = acc.len() as f64;
            let mean = fsum(acc.iter().copied()) / n;
            let var = if acc.len() > 1 {
                fsum(acc.iter().map(|a| (a - mean) * (a - mean))) / (n - 1.0)
            } else {
                0.0
            };
            summary.push(MnistSummary {
                hidden: h,
                method: m,
                k,
                seeds: acc.len(),
                accuracy_mean: mean,
                accuracy_std: var.sqrt(),
            });
        }
    }
    Ok((rows, summary))
}
