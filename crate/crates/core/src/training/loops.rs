use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use crate::diffcore::{fsum, Graph, Tensor};
use crate::error::{invalid, Error, Result};
use crate::models::{select_rows, Batch, LikelihoodSpec, Nonlinearity};
use crate::rng::{normals, stream, Stream};
use crate::symmetrization::{build_objective, draw_perms, ObjectiveSpec};
use crate::variational::{MeanFieldGaussian, MeanFieldNodes, MuInit, PriorSpec};
use crate::weightspace::Architecture;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Job index within a sweep; selects independent streams of the same seed.
    pub job: u64,
    /// Weight samples per step.
    pub samples: usize,
    /// Density terms of the entropy estimator; 1 gives plain mean-field VI.
    pub k: usize,
    pub prior_std: f64,
    pub mu_init: MuInit,
    pub rho_init: f64,
    pub act: Nonlinearity,
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 10,
            learning_rate: 5e-3,
            optimizer: OptimizerKind::adam(),
            seed: 0,
            job: 0,
            samples: 1,
            k: 1,
            prior_std: 1.0,
            mu_init: MuInit::FanIn,
            rho_init: 0.1f64.ln(),
            act: Nonlinearity::Relu,
            eval_samples: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.samples == 0 || self.k == 0 || self.eval_samples == 0 {
            return invalid("batch size, samples, K and eval samples must be at least 1");
        }
        PriorSpec::new(self.prior_std)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub elbo_vi: f64,
    pub h_k: f64,
    pub mutual_info: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub final_q: Option<MeanFieldGaussian>,
}

/// Minimise `−L̂ᴷ` by minibatch gradient steps. `cfg.k = 1` is plain MFVI.
///
/// Shuffling, initialisation, reparameterisation noise and group elements
/// come from separate streams of `cfg.seed`.
pub fn train(
    data: &Batch,
    arch: &Architecture,
    likelihood: &LikelihoodSpec,
    cfg: &TrainConfig,
) -> Result<(MeanFieldGaussian, TrainHistory)> {
    cfg.validate()?;
    let prior = PriorSpec::new(cfg.prior_std)?;
    let d = arch.num_params();
    let n = data.len();
    let mut data_rng = stream(cfg.seed, Stream::Data, cfg.job);
    let mut noise_rng = stream(cfg.seed, Stream::Noise, cfg.job);
    let mut perm_rng = stream(cfg.seed, Stream::Permutation, cfg.job);
    let mut q = MeanFieldGaussian::init(
        arch,
        cfg.mu_init,
        cfg.rho_init,
        &mut stream(cfg.seed, Stream::Init, cfg.job),
    )?;

    let mut params: Vec<f64> = q.mu().iter().chain(q.rho()).copied().collect();
    let mut opt = Optimizer::new(cfg.optimizer, 2 * d);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut data_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch {
                inputs: select_rows(&data.inputs, chunk),
                targets: data.targets.select(chunk),
                dataset_size: n,
            };
            let eps = Tensor::matrix(cfg.samples, d, normals(&mut noise_rng, cfg.samples * d))?;
            let perms = draw_perms(&mut perm_rng, arch, cfg.k);

            let mut g = Graph::new();
            let nodes = MeanFieldNodes::declare(&mut g, d)?;
            let spec = ObjectiveSpec {
                arch,
                batch: &batch,
                likelihood,
                act: cfg.act,
                prior: &prior,
            };
            let obj = build_objective(&mut g, &nodes, spec, eps, &perms)?;
            let mut b = HashMap::new();
            nodes.bind(&q, &mut b)?;
            let fwd = g.forward(&b)?;
            let grads = fwd.backward()?;
            let mut flat = grads.get(nodes.mu).expect("mu is a parameter").data().to_vec();
            flat.extend_from_slice(grads.get(nodes.rho).expect("rho is a parameter").data());

            let loss = fwd.scalar(obj.loss);
            history.steps.push(StepRecord {
                step,
                epoch,
                loss,
                elbo_vi: fwd.scalar(obj.elbo_vi),
                h_k: fwd.scalar(obj.hk.h_k),
                mutual_info: fwd.scalar(obj.hk.mutual_info),
                grad_norm: fsum(flat.iter().map(|x| x * x)).sqrt(),
            });
            if !loss.is_finite() || flat.iter().any(|x| !x.is_finite()) {
                history.final_q = Some(q);
                return Err(Error::Diverged {
                    step,
                    msg: format!("loss {loss}"),
                    history: Box::new(history),
                });
            }
            opt.step(&mut params, &flat, cfg.learning_rate)?;
            q = MeanFieldGaussian::new(params[..d].to_vec(), params[d..].to_vec()).map_err(|e| Error::Diverged {
                step,
                msg: e.to_string(),
                history: Box::new(history.clone()),
            })?;
            step += 1;
        }
    }
    history.final_q = Some(q.clone());
    Ok((q, history))
}

/// Mean-field VI: [`train`] with `K = 1`.
pub fn train_mfvi(
    data: &Batch,
    arch: &Architecture,
    likelihood: &LikelihoodSpec,
    cfg: &TrainConfig,
) -> Result<(MeanFieldGaussian, TrainHistory)> {
    let cfg = TrainConfig { k: 1, ..cfg.clone() };
    train(data, arch, likelihood, &cfg)
}

/// Symmetrized VI with `cfg.k` density terms. The returned posterior is the
/// base `q`; predictions sample from it directly.
pub fn train_sgm(
    data: &Batch,
    arch: &Architecture,
    likelihood: &LikelihoodSpec,
    cfg: &TrainConfig,
) -> Result<(MeanFieldGaussian, TrainHistory)> {
    train(data, arch, likelihood, cfg)
}
