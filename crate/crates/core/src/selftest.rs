//! Built-in numerical checks: finite-difference gradients for every graph
//! primitive and for the full training objective, plus the group axioms and
//! the invariances that follow from them.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::Result;
use crate::models::{forward, Batch, LikelihoodSpec, Nonlinearity, Targets};
use crate::rng::{normals, stream, Rng, Stream};
use crate::symmetrization::{build_objective, draw_perms, ObjectiveSpec};
use crate::variational::{MeanFieldGaussian, MeanFieldNodes, MuInit, PriorSpec};
use crate::weightspace::{apply_action, Architecture, GroupElement, WeightVector};

/// Central-difference step.
pub const GRAD_STEP: f64 = 1e-5;
/// Largest accepted relative error for a primitive.
pub const GRAD_TOL: f64 = 1e-5;
/// Largest accepted relative error for the end-to-end objective.
pub const OBJECTIVE_TOL: f64 = 1e-4;
/// Parameters probed per end-to-end check.
pub const OBJECTIVE_PROBES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    /// Worst error metric seen across cases.
    pub worst: f64,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::ok)
    }
}

/// `|a − n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Largest relative error between the analytic gradient of `param` and central
/// differences, over the components in `probe` (all when `None`).
pub fn check_gradient(
    graph: &Graph,
    bindings: &HashMap<NodeId, Tensor>,
    param: NodeId,
    probe: Option<&[usize]>,
) -> Result<f64> {
    let grads = graph.forward(bindings)?.backward()?;
    let analytic = grads.get(param).expect("param is bound").clone();
    let all: Vec<usize> = (0..analytic.len()).collect();
    let idx = probe.unwrap_or(&all);
    let mut b = bindings.clone();
    let mut worst: f64 = 0.0;
    for &i in idx {
        let x0 = bindings[&param].data()[i];
        b.get_mut(&param).expect("bound").data_mut()[i] = x0 + GRAD_STEP;
        let up = graph.forward(&b)?.output()?;
        b.get_mut(&param).expect("bound").data_mut()[i] = x0 - GRAD_STEP;
        let down = graph.forward(&b)?.output()?;
        b.get_mut(&param).expect("bound").data_mut()[i] = x0;
        let numeric = (up - down) / (2.0 * GRAD_STEP);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

type Build = fn(&mut Graph, NodeId, &mut Rng) -> Result<NodeId>;

fn constant(g: &mut Graph, rng: &mut Rng, shape: &[usize]) -> NodeId {
    let n = shape.iter().product();
    g.constant(Tensor::new(shape.to_vec(), normals(rng, n)).expect("shape matches"))
}

fn random_perm(rng: &mut Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Primitive cases: name, input shape, whether inputs must be positive, builder.
pub fn primitive_cases() -> Vec<(&'static str, Vec<usize>, bool, Build)> {
    vec![
        ("add", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[3, 4]);
            g.add(x, c)
        }),
        ("add_row", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[4]);
            g.add(x, c)
        }),
        ("sub_scalar", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[]);
            g.sub(x, c)
        }),
        ("mul", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[3, 4]);
            g.mul(x, c)
        }),
        ("mul_self", vec![5], false, |g, x, _| g.mul(x, x)),
        ("mul_row", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[4]);
            g.mul(x, c)
        }),
        ("neg", vec![6], false, |g, x, _| g.neg(x)),
        ("scale", vec![6], false, |g, x, _| g.scale(x, -1.7)),
        ("offset", vec![6], false, |g, x, _| g.offset(x, 0.3)),
        ("relu", vec![3, 4], false, |g, x, _| g.relu(x)),
        ("tanh", vec![3, 4], false, |g, x, _| g.tanh(x)),
        ("exp", vec![3, 4], false, |g, x, _| g.exp(x)),
        ("log", vec![3, 4], true, |g, x, _| g.log(x)),
        ("square", vec![3, 4], false, |g, x, _| g.square(x)),
        ("matmul_left", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[4, 2]);
            g.matmul(x, c)
        }),
        ("matmul_right", vec![4, 2], false, |g, x, r| {
            let c = constant(g, r, &[3, 4]);
            g.matmul(c, x)
        }),
        ("matmul_t_left", vec![3, 4], false, |g, x, r| {
            let c = constant(g, r, &[2, 4]);
            g.matmul_t(x, c)
        }),
        ("matmul_t_right", vec![2, 4], false, |g, x, r| {
            let c = constant(g, r, &[3, 4]);
            g.matmul_t(c, x)
        }),
        ("sum", vec![3, 4], false, |g, x, _| {
            let s = g.sum(x)?;
            g.square(s)
        }),
        ("sum_rows", vec![3, 4], false, |g, x, _| g.sum_rows(x)),
        ("logsumexp", vec![7], false, |g, x, _| {
            let s = g.scale(x, 3.0)?;
            g.logsumexp(s)
        }),
        ("logsumexp_rows", vec![3, 5], false, |g, x, _| g.logsumexp_rows(x)),
        ("logmeanexp_rows", vec![3, 5], false, |g, x, _| g.logmeanexp_rows(x)),
        ("gather_rows", vec![4, 3], false, |g, x, r| {
            let p = random_perm(r, 4);
            g.permute_gather(x, 0, &p)
        }),
        ("gather_cols", vec![4, 3], false, |g, x, r| {
            let p = random_perm(r, 3);
            g.permute_gather(x, 1, &p)
        }),
        ("slice", vec![12], false, |g, x, _| g.slice(x, 2, &[2, 3])),
        ("row", vec![3, 4], false, |g, x, _| g.row(x, 1)),
        ("reshape", vec![3, 4], false, |g, x, _| g.reshape(x, &[2, 6])),
        ("stack_cols", vec![8], false, |g, x, _| {
            let a = g.slice(x, 0, &[4])?;
            let b = g.slice(x, 4, &[4])?;
            let t = g.tanh(a)?;
            g.stack_cols(&[a, b, t])
        }),
        ("pick", vec![4, 3], false, |g, x, r| {
            let idx: Vec<usize> = (0..4).map(|_| r.random_range(0..3)).collect();
            g.pick(x, &idx)
        }),
    ]
}

fn primitive_inputs(rng: &mut Rng, shape: &[usize], positive: bool) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-2.0..2.0);
            // Keep clear of the ReLU kink and of log(0).
            let v = if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v };
            if positive {
                v.abs() + 0.1
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Relative error of one primitive on one seed.
pub fn primitive_error(case: &(&'static str, Vec<usize>, bool, Build), seed: u64, job: u64) -> Result<f64> {
    let (_, shape, positive, build) = case;
    let mut rng = stream(seed, Stream::Eval, job);
    let mut g = Graph::new();
    let x = g.param(shape);
    let y = build(&mut g, x, &mut rng)?;
    let ys = g.shape(y).to_vec();
    let w = constant(&mut g, &mut rng, &ys);
    let wy = g.mul(y, w)?;
    let out = g.sum(wy)?;
    g.set_output(out)?;
    let mut b = HashMap::new();
    b.insert(x, primitive_inputs(&mut rng, shape, *positive));
    check_gradient(&g, &b, x, None)
}

/// Every primitive on `seeds` random instances.
pub fn gradient_suite(seeds: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    primitive_cases()
        .iter()
        .enumerate()
        .map(|(c, case)| {
            let mut passed = 0;
            let mut worst: f64 = 0.0;
            for s in 0..seeds {
                let e = primitive_error(case, seed, (c * 100_000 + s) as u64)?;
                worst = worst.max(e);
                if e <= GRAD_TOL {
                    passed += 1;
                }
            }
            Ok(SuiteResult {
                name: format!("grad/{}", case.0),
                passed,
                total: seeds,
                worst,
            })
        })
        .collect()
}

/// Relative error of `∂(−L̂ᴷ)/∂(μ, ρ)` on `OBJECTIVE_PROBES` random components.
pub fn objective_error(seed: u64, job: u64, k: usize) -> Result<f64> {
    let mut rng = stream(seed, Stream::Eval, job);
    let arch = Architecture::mlp(&[2, 4, 1])?;
    let d = arch.num_params();
    let n = 12;
    let x = Tensor::matrix(n, 2, normals(&mut rng, 2 * n))?;
    let y = Tensor::matrix(n, 1, normals(&mut rng, n))?;
    let batch = Batch::new(x, Targets::Values(y), 3 * n)?;
    let lik = LikelihoodSpec::regression(0.5)?;
    let prior = PriorSpec::new(1.0)?;
    let mut q = MeanFieldGaussian::init(&arch, MuInit::FanIn, -1.0, &mut rng)?;
    let rho: Vec<f64> = q.rho().iter().map(|r| r + 0.3 * rng.random_range(-1.0..1.0)).collect();
    q = MeanFieldGaussian::new(q.mu().to_vec(), rho)?;
    let s = 3;
    let eps = Tensor::matrix(s, d, normals(&mut rng, s * d))?;
    let perms = draw_perms(&mut rng, &arch, k);

    let mut g = Graph::new();
    let nodes = MeanFieldNodes::declare(&mut g, d)?;
    let spec = ObjectiveSpec {
        arch: &arch,
        batch: &batch,
        likelihood: &lik,
        act: Nonlinearity::Relu,
        prior: &prior,
    };
    build_objective(&mut g, &nodes, spec, eps, &perms)?;
    let mut b = HashMap::new();
    nodes.bind(&q, &mut b)?;
    let probe_mu: Vec<usize> = sample(&mut rng, d, OBJECTIVE_PROBES / 2).into_vec();
    let probe_rho: Vec<usize> = sample(&mut rng, d, OBJECTIVE_PROBES - OBJECTIVE_PROBES / 2).into_vec();
    let e_mu = check_gradient(&g, &b, nodes.mu, Some(&probe_mu))?;
    let e_rho = check_gradient(&g, &b, nodes.rho, Some(&probe_rho))?;
    Ok(e_mu.max(e_rho))
}

pub fn objective_suite(cases: usize, seed: u64) -> Result<SuiteResult> {
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let k = [1, 2, 5][c % 3];
        let e = objective_error(seed, 1_000_000 + c as u64, k)?;
        worst = worst.max(e);
        if e <= OBJECTIVE_TOL {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: "grad/objective".into(),
        passed,
        total: cases,
        worst,
    })
}

fn random_arch(rng: &mut Rng) -> Result<Architecture> {
    let layers = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=3)];
    for _ in 0..layers {
        dims.push(rng.random_range(1..=5));
    }
    dims.push(rng.random_range(1..=3));
    let bias: Vec<bool> = (0..dims.len() - 1).map(|_| rng.random_bool(0.7)).collect();
    Architecture::new(&dims, &bias)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One random case of every group property; entry is the error metric (0 is exact).
pub fn group_case(seed: u64, job: u64) -> Result<Vec<(&'static str, f64, f64)>> {
    let mut rng = stream(seed, Stream::Permutation, job);
    let arch = random_arch(&mut rng)?;
    let d = arch.num_params();
    let w = WeightVector::new(&arch, normals(&mut rng, d))?;
    let g1 = GroupElement::sample_uniform(&mut rng, &arch);
    let g2 = GroupElement::sample_uniform(&mut rng, &arch);
    let g3 = GroupElement::sample_uniform(&mut rng, &arch);
    let e = GroupElement::identity(&arch);
    let mut out = Vec::new();

    out.push((
        "identity",
        max_abs_diff(apply_action(&e, &w)?.as_slice(), w.as_slice()),
        0.0,
    ));
    let lhs = apply_action(&g1.compose(&g2)?, &w)?;
    let rhs = apply_action(&g1, &apply_action(&g2, &w)?)?;
    out.push(("homomorphism", max_abs_diff(lhs.as_slice(), rhs.as_slice()), 0.0));
    let a = g1.compose(&g2)?.compose(&g3)?;
    let b = g1.compose(&g2.compose(&g3)?)?;
    out.push(("associativity", if a == b { 0.0 } else { 1.0 }, 0.0));
    let back = apply_action(&g1.inverse(), &apply_action(&g1, &w)?)?;
    out.push(("inverse", max_abs_diff(back.as_slice(), w.as_slice()), 0.0));
    let gw = apply_action(&g1, &w)?;
    out.push(("norm", (gw.norm() - w.norm()).abs(), 0.0));

    let n = 6;
    let x = Tensor::matrix(n, arch.input_dim(), normals(&mut rng, n * arch.input_dim()))?;
    for (name, act) in [
        ("function/relu", Nonlinearity::Relu),
        ("function/tanh", Nonlinearity::Tanh),
    ] {
        let f0 = forward(&w, &x, act)?;
        let f1 = forward(&gw, &x, act)?;
        let scale = f0.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        out.push((name, max_abs_diff(f0.data(), f1.data()) / scale, 1e-12));
    }

    // Pushforward of a mean-field Gaussian is the mean-field Gaussian with
    // permuted parameters; its density at g·ω equals q(ω).
    let q = MeanFieldGaussian::new(
        normals(&mut rng, d),
        normals(&mut rng, d).iter().map(|v| 0.3 * v).collect(),
    )?;
    let mu_g = apply_action(&g1, &WeightVector::new(&arch, q.mu().to_vec())?)?;
    let rho_g = apply_action(&g1, &WeightVector::new(&arch, q.rho().to_vec())?)?;
    let qg = MeanFieldGaussian::new(mu_g.into_vec(), rho_g.into_vec())?;
    out.push(("entropy", (qg.entropy() - q.entropy()).abs(), 0.0));
    let dens = (qg.log_density(gw.as_slice())? - q.log_density(w.as_slice())?).abs();
    out.push(("pushforward_density", dens, 0.0));
    Ok(out)
}

pub fn group_suite(cases: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut suites: Vec<SuiteResult> = Vec::new();
    for c in 0..cases {
        for (name, err, tol) in group_case(seed, c as u64)? {
            let full = format!("group/{name}");
            let s = match suites.iter_mut().find(|s| s.name == full) {
                Some(s) => s,
                None => {
                    suites.push(SuiteResult {
                        name: full,
                        passed: 0,
                        total: 0,
                        worst: 0.0,
                    });
                    suites.last_mut().expect("just pushed")
                }
            };
            s.total += 1;
            s.worst = s.worst.max(err);
            if err <= tol {
                s.passed += 1;
            }
        }
    }
    Ok(suites)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestConfig {
    pub grad_seeds: usize,
    pub objective_cases: usize,
    pub group_cases: usize,
    pub seed: u64,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            grad_seeds: 100,
            objective_cases: 30,
            group_cases: 1000,
            seed: 0,
        }
    }
}

pub fn run_selftest(cfg: &SelftestConfig) -> Result<SelftestReport> {
    let mut suites = gradient_suite(cfg.grad_seeds, cfg.seed)?;
    suites.push(objective_suite(cfg.objective_cases, cfg.seed)?);
    suites.extend(group_suite(cfg.group_cases, cfg.seed)?);
    Ok(SelftestReport { suites })
}
