//! The symmetrized posterior `q^G`, its entropy estimator `Ĥᴷ`, and the
//! symmetrized ELBO.
//!
//! `Ĥᴷ = −(1/S) Σᵢ log (1/K)[q(ωᵢ) + Σⱼ q(gⱼ⁻¹·ωᵢ)]` with `ωᵢ ~ q` and
//! `g₁ … g_{K−1}` uniform over the group. The objective subtracts the plain
//! estimate `Ĥ¹` computed on the same draws, so the correction `Ĥᴷ − Ĥ¹` is an
//! estimate of the mutual information between the group element and the weights.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::{logmeanexp, Graph, NodeId, Tensor};
use crate::error::{invalid, Result};
use crate::models::{
    forward, forward_graph, log_likelihood, log_likelihood_graph, Batch, LikelihoodSpec, Nonlinearity,
};
use crate::rng::{normals, Rng};
use crate::variational::{MeanFieldGaussian, MeanFieldNodes, PriorSpec};
use crate::weightspace::{apply_action_flat, Architecture, GroupElement, WeightVector};

/// Density terms `K` (including the identity) and weight samples `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetrizationConfig {
    pub k: usize,
    pub s: usize,
}

impl SymmetrizationConfig {
    pub fn new(k: usize, s: usize) -> Result<Self> {
        if k < 1 || s < 1 {
            return invalid(format!("K and S must be at least 1, got K={k}, S={s}"));
        }
        Ok(SymmetrizationConfig { k, s })
    }
}

/// One evaluation of the base and symmetrized ELBOs.
///
/// `entropy_q` is the Monte Carlo entropy `Ĥ¹` on the draws shared with
/// `h_k`, so `elbo_k = elbo_vi + (h_k − entropy_q)` holds exactly and the
/// correction vanishes identically when `K = 1` or `q` is invariant.
/// `entropy_closed` is the analytic `H(q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboReport {
    pub elbo_vi: f64,
    pub expected_log_lik: f64,
    pub kl_prior: f64,
    pub entropy_q: f64,
    pub entropy_closed: f64,
    pub h_k: f64,
    pub mutual_info: f64,
    pub elbo_k: f64,
    pub k: usize,
    pub s: usize,
    pub batch_size: usize,
    pub dataset_size: usize,
    pub seed: Option<u64>,
}

/// Draw `S` rows of standard-normal noise, then `K − 1` group elements.
pub fn draw_noise_and_perms(
    rng: &mut Rng,
    arch: &Architecture,
    cfg: SymmetrizationConfig,
) -> (Tensor, Vec<GroupElement>) {
    let d = arch.num_params();
    let eps = Tensor::matrix(cfg.s, d, normals(rng, cfg.s * d)).expect("sized to S×D");
    let perms = draw_perms(rng, arch, cfg.k);
    (eps, perms)
}

/// `K − 1` uniform group elements.
pub fn draw_perms(rng: &mut Rng, arch: &Architecture, k: usize) -> Vec<GroupElement> {
    (1..k).map(|_| GroupElement::sample_uniform(rng, arch)).collect()
}

/// Entropy estimator nodes built on shared draws.
#[derive(Clone, Copy, Debug)]
pub struct HkNodes {
    /// `log q(ωᵢ)` per draw, `[S]`.
    pub log_q: NodeId,
    pub h_1: NodeId,
    pub h_k: NodeId,
    pub mutual_info: NodeId,
}

/// Build `Ĥᴷ` and `Ĥ¹` for the draws `omega` (`[S, D]`).
pub fn hk_nodes(
    g: &mut Graph,
    q: &MeanFieldNodes,
    arch: &Architecture,
    omega: NodeId,
    perms: &[GroupElement],
) -> Result<HkNodes> {
    let s = g.shape(omega)[0] as f64;
    let log_q = q.log_density_rows(g, omega)?;
    let total = g.sum(log_q)?;
    let h_1 = g.scale(total, -1.0 / s)?;
    let h_k = if perms.is_empty() {
        h_1
    } else {
        let mut cols = vec![log_q];
        for gj in perms {
            let p = gj.inverse().flat_permutation(arch)?;
            let moved = g.permute_gather(omega, 1, &p)?;
            cols.push(q.log_density_rows(g, moved)?);
        }
        let stacked = g.stack_cols(&cols)?;
        let lme = g.logmeanexp_rows(stacked)?;
        let total = g.sum(lme)?;
        g.scale(total, -1.0 / s)?
    };
    let mutual_info = g.sub(h_k, h_1)?;
    Ok(HkNodes {
        log_q,
        h_1,
        h_k,
        mutual_info,
    })
}

/// `(Ĥᴷ, Ĥ¹)` without building a graph. `eps` holds one draw per row.
pub fn hk_values(
    q: &MeanFieldGaussian,
    arch: &Architecture,
    eps: &Tensor,
    perms: &[GroupElement],
) -> Result<(f64, f64)> {
    q.check_arch(arch)?;
    let inv: Vec<GroupElement> = perms.iter().map(GroupElement::inverse).collect();
    let mut lq = Vec::with_capacity(eps.rows());
    let mut lme = Vec::with_capacity(eps.rows());
    let mut terms = Vec::with_capacity(perms.len() + 1);
    for i in 0..eps.rows() {
        let w = q.sample(eps.row(i))?;
        terms.clear();
        terms.push(q.log_density(&w)?);
        for gi in &inv {
            terms.push(q.log_density(&apply_action_flat(gi, arch, &w)?)?);
        }
        lq.push(terms[0]);
        lme.push(logmeanexp(&terms)?);
    }
    let s = eps.rows() as f64;
    let h_1 = -crate::diffcore::fsum(lq) / s;
    let h_k = -crate::diffcore::fsum(lme) / s;
    Ok((h_k, h_1))
}

/// A differentiable `Ĥᴷ` estimate together with its value.
#[derive(Debug)]
pub struct HkEstimate {
    pub value: f64,
    pub entropy_mc: f64,
    /// Graph whose output is `Ĥᴷ`.
    pub graph: Graph,
    pub q_nodes: MeanFieldNodes,
    pub nodes: HkNodes,
}

impl HkEstimate {
    /// Parameter bindings that reproduce `value`.
    pub fn bindings(&self, q: &MeanFieldGaussian) -> Result<HashMap<NodeId, Tensor>> {
        let mut b = HashMap::new();
        self.q_nodes.bind(q, &mut b)?;
        Ok(b)
    }
}

/// Draw `S` weights and `K − 1` group elements from `rng` and estimate `Ĥᴷ`.
pub fn hk_estimate(
    q: &MeanFieldGaussian,
    arch: &Architecture,
    cfg: SymmetrizationConfig,
    rng: &mut Rng,
) -> Result<HkEstimate> {
    q.check_arch(arch)?;
    let (eps, perms) = draw_noise_and_perms(rng, arch, cfg);
    let mut g = Graph::new();
    let q_nodes = MeanFieldNodes::declare(&mut g, arch.num_params())?;
    let e = g.constant(eps);
    let omega = q_nodes.sample(&mut g, e)?;
    let nodes = hk_nodes(&mut g, &q_nodes, arch, omega, &perms)?;
    g.set_output(nodes.h_k)?;
    let mut b = HashMap::new();
    q_nodes.bind(q, &mut b)?;
    let fwd = g.forward(&b)?;
    let value = fwd.scalar(nodes.h_k);
    let entropy_mc = fwd.scalar(nodes.h_1);
    drop(fwd);
    Ok(HkEstimate {
        value,
        entropy_mc,
        graph: g,
        q_nodes,
        nodes,
    })
}

/// `log q^G(ω)` for an explicitly enumerated group.
pub fn symmetric_mixture_log_density(
    q: &MeanFieldGaussian,
    arch: &Architecture,
    w: &WeightVector,
    group: &[GroupElement],
) -> Result<f64> {
    if group.is_empty() {
        return invalid("empty group element list");
    }
    q.check_arch(arch)?;
    let terms = group
        .iter()
        .map(|gi| q.log_density(&apply_action_flat(&gi.inverse(), arch, w.as_slice())?))
        .collect::<Result<Vec<_>>>()?;
    logmeanexp(&terms)
}

/// Nodes of the full training objective.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveNodes {
    /// `−elbo_k`, the graph output.
    pub loss: NodeId,
    pub elbo_vi: NodeId,
    pub elbo_k: NodeId,
    pub expected_log_lik: NodeId,
    pub kl_prior: NodeId,
    pub entropy_closed: NodeId,
    pub hk: HkNodes,
}

/// Everything the symmetrized objective needs apart from the parameters.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveSpec<'a> {
    pub arch: &'a Architecture,
    pub batch: &'a Batch,
    pub likelihood: &'a LikelihoodSpec,
    pub act: Nonlinearity,
    pub prior: &'a PriorSpec,
}

/// Build `L̂ᴷ = L̂_VI + Ĥᴷ − Ĥ¹` for noise `eps` (`[S, D]`) and elements `perms`,
/// and set `−L̂ᴷ` as the graph output.
pub fn build_objective(
    g: &mut Graph,
    q: &MeanFieldNodes,
    spec: ObjectiveSpec<'_>,
    eps: Tensor,
    perms: &[GroupElement],
) -> Result<ObjectiveNodes> {
    let s = eps.rows();
    let e = g.constant(eps);
    let omega = q.sample(g, e)?;
    let x = g.constant(spec.batch.inputs.clone());
    let mut ll: Option<NodeId> = None;
    for i in 0..s {
        let w = g.row(omega, i)?;
        let out = forward_graph(g, spec.arch, w, x, spec.act)?;
        let l = log_likelihood_graph(g, spec.likelihood, out, &spec.batch.targets)?;
        ll = Some(match ll {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    let ll = ll.expect("S ≥ 1");
    let expected_log_lik = g.scale(ll, spec.batch.scale() / s as f64)?;
    let kl_prior = q.kl_to_prior(g, spec.prior)?;
    let elbo_vi = g.sub(expected_log_lik, kl_prior)?;
    let hk = hk_nodes(g, q, spec.arch, omega, perms)?;
    let elbo_k = g.add(elbo_vi, hk.mutual_info)?;
    let loss = g.neg(elbo_k)?;
    let entropy_closed = q.entropy(g)?;
    g.set_output(loss)?;
    Ok(ObjectiveNodes {
        loss,
        elbo_vi,
        elbo_k,
        expected_log_lik,
        kl_prior,
        entropy_closed,
        hk,
    })
}

/// A symmetrized ELBO estimate with its differentiable graph.
#[derive(Debug)]
pub struct SymmetrizedElbo {
    pub report: ElboReport,
    pub graph: Graph,
    pub q_nodes: MeanFieldNodes,
    pub nodes: ObjectiveNodes,
}

/// Estimate `L̂ᴷ` on a batch, drawing noise then group elements from `rng`.
pub fn symmetrized_elbo(
    q: &MeanFieldGaussian,
    spec: ObjectiveSpec<'_>,
    cfg: SymmetrizationConfig,
    rng: &mut Rng,
) -> Result<SymmetrizedElbo> {
    q.check_arch(spec.arch)?;
    let (eps, perms) = draw_noise_and_perms(rng, spec.arch, cfg);
    let mut g = Graph::new();
    let q_nodes = MeanFieldNodes::declare(&mut g, spec.arch.num_params())?;
    let nodes = build_objective(&mut g, &q_nodes, spec, eps, &perms)?;
    let mut b = HashMap::new();
    q_nodes.bind(q, &mut b)?;
    let fwd = g.forward(&b)?;
    let report = report_from(&fwd, &nodes, cfg, spec.batch, None);
    drop(fwd);
    Ok(SymmetrizedElbo {
        report,
        graph: g,
        q_nodes,
        nodes,
    })
}

pub(crate) fn report_from(
    fwd: &crate::diffcore::Forward<'_>,
    n: &ObjectiveNodes,
    cfg: SymmetrizationConfig,
    batch: &Batch,
    seed: Option<u64>,
) -> ElboReport {
    ElboReport {
        elbo_vi: fwd.scalar(n.elbo_vi),
        expected_log_lik: fwd.scalar(n.expected_log_lik),
        kl_prior: fwd.scalar(n.kl_prior),
        entropy_q: fwd.scalar(n.hk.h_1),
        entropy_closed: fwd.scalar(n.entropy_closed),
        h_k: fwd.scalar(n.hk.h_k),
        mutual_info: fwd.scalar(n.hk.mutual_info),
        elbo_k: fwd.scalar(n.elbo_k),
        k: cfg.k,
        s: cfg.s,
        batch_size: batch.len(),
        dataset_size: batch.dataset_size,
        seed,
    }
}

/// Graph-free evaluation of the same estimator, for large `K` and `S`.
pub fn evaluate_elbo(
    q: &MeanFieldGaussian,
    spec: ObjectiveSpec<'_>,
    eps: &Tensor,
    perms: &[GroupElement],
) -> Result<ElboReport> {
    q.check_arch(spec.arch)?;
    let s = eps.rows();
    let mut lls = Vec::with_capacity(s);
    for i in 0..s {
        let w = q.sample_weights(spec.arch, eps.row(i))?;
        let out = forward(&w, &spec.batch.inputs, spec.act)?;
        lls.push(log_likelihood(spec.likelihood, &out, &spec.batch.targets)?);
    }
    let expected_log_lik = crate::diffcore::fsum(lls) * (spec.batch.scale() / s as f64);
    let kl_prior = q.kl_to_prior(spec.prior);
    let elbo_vi = expected_log_lik - kl_prior;
    let (h_k, h_1) = hk_values(q, spec.arch, eps, perms)?;
    let mutual_info = h_k - h_1;
    Ok(ElboReport {
        elbo_vi,
        expected_log_lik,
        kl_prior,
        entropy_q: h_1,
        entropy_closed: q.entropy(),
        h_k,
        mutual_info,
        elbo_k: elbo_vi + mutual_info,
        k: perms.len() + 1,
        s,
        batch_size: spec.batch.len(),
        dataset_size: spec.batch.dataset_size,
        seed: None,
    })
}
