use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::jobs::parallel_map;
use crate::diffcore::{fsum, logsumexp, Tensor};
use crate::error::{invalid, Result};
use crate::models::{Batch, LikelihoodSpec, Nonlinearity, Targets};
use crate::rng::{stream, Rng, Stream};
use crate::symmetrization::{draw_noise_and_perms, evaluate_elbo, ObjectiveSpec, SymmetrizationConfig};
use crate::training::{mse, predictive_mean, train, OptimizerKind, TrainConfig};
use crate::variational::{MeanFieldGaussian, MuInit, PriorSpec};
use crate::weightspace::Architecture;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub alphas: Vec<f64>,
    pub seeds: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub k: usize,
    pub k_eval: usize,
    pub eval_samples: usize,
    pub train_samples: usize,
    pub noise_std: f64,
    pub prior_std: f64,
    pub mu_init_std: f64,
    /// Initial posterior std of every weight.
    pub sigma_init: f64,
    pub grid_n: usize,
    pub grid_c: f64,
    /// α whose seed-0 fits are dumped on the grid; `None` disables the dump.
    pub dump_alpha: Option<f64>,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            alphas: vec![0.05, 0.1, 0.15, 0.2],
            seeds: 10,
            n_train: 100,
            n_test: 100,
            batch: 10,
            lr: 5e-3,
            epochs: 10,
            k: 2,
            k_eval: 500,
            eval_samples: 1000,
            train_samples: 1,
            noise_std: 2.0,
            prior_std: 1.0,
            mu_init_std: 0.01,
            sigma_init: 0.1,
            grid_n: 400,
            grid_c: 1.0,
            dump_alpha: Some(0.2),
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.seeds == 0 {
            return invalid("alphas and seeds must be non-empty");
        }
        if self.k == 0 || self.k_eval == 0 {
            return invalid("K must be at least 1");
        }
        if self.grid_n < 3 {
            return invalid("grid needs at least 3 points per axis");
        }
        LikelihoodSpec::regression(self.noise_std)?;
        PriorSpec::new(self.prior_std)?;
        Ok(())
    }

    fn train_config(&self, k: usize, job: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            optimizer: OptimizerKind::adam(),
            seed: self.seed,
            job,
            samples: self.train_samples,
            k,
            prior_std: self.prior_std,
            mu_init: MuInit::Std(self.mu_init_std),
            rho_init: self.sigma_init.ln(),
            act: Nonlinearity::Relu,
            eval_samples: self.eval_samples,
        }
    }
}

/// `N` points with `x ~ U[−10, 10]` and `y = α|x|`.
pub fn make_toy_dataset(alpha: f64, n: usize, rng: &mut Rng) -> Result<Batch> {
    if n == 0 {
        return invalid("empty dataset");
    }
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| alpha * v.abs()).collect();
    Batch::new(Tensor::matrix(n, 1, x)?, Targets::Values(Tensor::matrix(n, 1, y)?), n)
}

/// Square lattice `[−c, c]²` with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn step(&self) -> f64 {
        2.0 * self.c / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.c + i as f64 * self.step()
    }

    /// Evaluate `f(w₁, w₂)` at every node; index `i·n + j` holds `(coord(i), coord(j))`.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.push(f(self.coord(i), self.coord(j)));
            }
        }
        out
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5
        } else {
            1.0
        }
    }

    /// `log ∫ exp(v)` by the 2-D trapezoidal rule.
    pub fn log_integral(&self, log_values: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(log_values.len());
        for i in 0..self.n {
            for j in 0..self.n {
                terms.push(log_values[i * self.n + j] + (self.trapezoid_weight(i) * self.trapezoid_weight(j)).ln());
            }
        }
        Ok(logsumexp(&terms)? + 2.0 * self.step().ln())
    }

    /// Trapezoidal integral of a density given on the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let h2 = self.step() * self.step();
        let mut terms = Vec::with_capacity(values.len());
        for i in 0..self.n {
            for j in 0..self.n {
                terms.push(values[i * self.n + j] * self.trapezoid_weight(i) * self.trapezoid_weight(j));
            }
        }
        fsum(terms) * h2
    }
}

/// Exact posterior of the two-parameter model on a lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub grid: GridSpec,
    pub log_unnorm: Vec<f64>,
    pub log_z: f64,
}

impl GridPosterior {
    pub fn density(&self) -> Vec<f64> {
        self.log_unnorm.iter().map(|v| (v - self.log_z).exp()).collect()
    }
}

fn toy_log_lik(data: &Batch, noise_std: f64, w1: f64, w2: f64) -> f64 {
    let Targets::Values(y) = &data.targets else {
        unreachable!("toy data is regression")
    };
    let var = noise_std * noise_std;
    let c = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let sq = fsum(data.inputs.data().iter().zip(y.data()).map(|(&x, &t)| {
        let f = (w1 * x).max(0.0) + (w2 * x).max(0.0);
        (t - f) * (t - f)
    }));
    c * data.len() as f64 - sq / (2.0 * var)
}

/// `log p(Y|X, ω) + log p(ω)` on the grid, normalised by the trapezoidal rule.
///
/// Rejects grids whose normaliser changes by more than `1e-4` (relative) at
/// half the resolution, or that leave more than `1e-4` of the mass on
/// the boundary.
pub fn exact_toy_posterior(data: &Batch, prior: &PriorSpec, noise_std: f64, grid: GridSpec) -> Result<GridPosterior> {
    if grid.n < 3 || !(grid.c > 0.0) {
        return invalid("grid needs n ≥ 3 and c > 0");
    }
    if data.inputs.cols() != 1 || !matches!(data.targets, Targets::Values(_)) {
        return invalid("toy posterior needs 1-d regression data");
    }
    let s2 = prior.std * prior.std;
    let lp0 = -(2.0 * std::f64::consts::PI * s2).ln();
    let log_post = |w1: f64, w2: f64| toy_log_lik(data, noise_std, w1, w2) + lp0 - (w1 * w1 + w2 * w2) / (2.0 * s2);
    let log_unnorm = grid.map(log_post);
    let log_z = grid.log_integral(&log_unnorm)?;
    let half = GridSpec {
        c: grid.c,
        n: grid.n.div_ceil(2),
    };
    if half.n >= 3 {
        let coarse = half.log_integral(&half.map(log_post))?;
        if (coarse - log_z).abs() > 1e-4 {
            return invalid(format!(
                "grid too coarse: normaliser moves by {:.2e}",
                (coarse - log_z).abs()
            ));
        }
    }
    let post = GridPosterior {
        grid,
        log_unnorm,
        log_z,
    };
    let dens = post.density();
    let n = grid.n;
    let h = grid.step();
    let edge = fsum((0..n).flat_map(|i| {
        let d = &dens;
        [d[i], d[(n - 1) * n + i], d[i * n], d[i * n + n - 1]]
    })) * h
        * h;
    if edge > 1e-4 {
        return invalid(format!("grid does not cover the posterior: boundary mass {edge:.2e}"));
    }
    Ok(post)
}

/// Local maxima (8-neighbourhood) of a grid field, largest first.
pub fn local_maxima(grid: &GridSpec, values: &[f64]) -> Vec<(f64, f64, f64)> {
    let n = grid.n;
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = values[i * n + j];
            let mut is_max = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                        continue;
                    }
                    if values[a as usize * n + b as usize] > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((grid.coord(i), grid.coord(j), v));
            }
        }
    }
    out.sort_by(|a, b| b.2.total_cmp(&a.2));
    out
}

/// `q` and `q^G` densities on the grid.
pub fn density_grids(q: &MeanFieldGaussian, grid: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = grid.map(|a, b| q.log_density(&[a, b]).map(f64::exp).unwrap_or(f64::NAN));
    let n = grid.n;
    // The only non-trivial element swaps the two weights.
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = 0.5 * (base[i * n + j] + base[j * n + i]);
        }
    }
    Ok((base, sym))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mfvi,
    Sgm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub alpha: f64,
    pub seed: usize,
    pub method: Method,
    pub mse: f64,
    /// Per-datum values on the training set.
    pub elbo_vi: f64,
    pub elbo_k: f64,
    pub mutual_info: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub alpha: f64,
    pub method: Method,
    pub seeds: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub elbo_k_mean: f64,
    pub elbo_k_std: f64,
    pub elbo_vi_mean: f64,
}

/// Seed-0 densities at one α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDump {
    pub alpha: f64,
    pub grid: GridSpec,
    pub posterior: Vec<f64>,
    pub mfvi_q: Vec<f64>,
    pub mfvi_qg: Vec<f64>,
    pub sgm_q: Vec<f64>,
    pub sgm_qg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDumpRow {
    pub w1: f64,
    pub w2: f64,
    pub posterior: f64,
    pub mfvi_q: f64,
    pub mfvi_qg: f64,
    pub sgm_q: f64,
    pub sgm_qg: f64,
}

impl GridDump {
    pub fn rows(&self) -> Vec<GridDumpRow> {
        let n = self.grid.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                out.push(GridDumpRow {
                    w1: self.grid.coord(i),
                    w2: self.grid.coord(j),
                    posterior: self.posterior[k],
                    mfvi_q: self.mfvi_q[k],
                    mfvi_qg: self.mfvi_qg[k],
                    sgm_q: self.sgm_q[k],
                    sgm_qg: self.sgm_qg[k],
                });
            }
        }
        out
    }
}

/// How the dumped fits sit relative to the two exact modes `(±α, ∓α)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitAnalysis {
    pub alpha: f64,
    pub mfvi_argmax: (f64, f64),
    pub mfvi_dist_midpoint: f64,
    pub mfvi_dist_nearest_mode: f64,
    pub mfvi_between: bool,
    pub sgm_maxima: Vec<(f64, f64)>,
    /// Chebyshev distance in cells from each SGM maximum to its mode.
    pub sgm_cells_off: Vec<f64>,
    pub sgm_at_modes: bool,
    pub posterior_maxima: Vec<(f64, f64)>,
}

pub fn analyze_fit(dump: &GridDump) -> FitAnalysis {
    let a = dump.alpha;
    let g = &dump.grid;
    let h = g.step();
    let modes = [(a, -a), (-a, a)];
    let dist = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();

    let best = local_maxima(g, &dump.mfvi_q);
    let m = best.first().map(|&(x, y, _)| (x, y)).unwrap_or((f64::NAN, f64::NAN));
    let d_mid = dist(m, (0.0, 0.0));
    let d_mode = modes.iter().map(|&q| dist(m, q)).fold(f64::INFINITY, f64::min);

    let sgm: Vec<(f64, f64)> = local_maxima(g, &dump.sgm_qg)
        .iter()
        .take(2)
        .map(|&(x, y, _)| (x, y))
        .collect();
    let cells = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).abs().max((p.1 - q.1).abs())) / h;
    let off: Vec<f64> = sgm
        .iter()
        .map(|&p| modes.iter().map(|&q| cells(p, q)).fold(f64::INFINITY, f64::min))
        .collect();
    let covers_both = sgm.len() == 2 && modes.iter().all(|&q| sgm.iter().any(|&p| cells(p, q) <= 2.0 + 1e-9));
    let post: Vec<(f64, f64)> = local_maxima(g, &dump.posterior)
        .iter()
        .take(2)
        .map(|&(x, y, _)| (x, y))
        .collect();

    FitAnalysis {
        alpha: a,
        mfvi_argmax: m,
        mfvi_dist_midpoint: d_mid,
        mfvi_dist_nearest_mode: d_mode,
        mfvi_between: d_mid < d_mode,
        sgm_maxima: sgm,
        sgm_cells_off: off,
        sgm_at_modes: covers_both,
        posterior_maxima: post,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyResults {
    pub rows: Vec<ToyRow>,
    pub summary: Vec<ToySummary>,
    pub dump: Option<GridDump>,
    pub fit: Option<FitAnalysis>,
}

struct FitOutcome {
    mfvi: (ToyRow, MeanFieldGaussian),
    sgm: (ToyRow, MeanFieldGaussian),
    train: Batch,
}

fn run_pair(cfg: &ToyConfig, alpha: f64, seed: usize) -> Result<FitOutcome> {
    let arch = Architecture::toy();
    let lik = LikelihoodSpec::regression(cfg.noise_std)?;
    let prior = PriorSpec::new(cfg.prior_std)?;
    let train_set = make_toy_dataset(
        alpha,
        cfg.n_train,
        &mut stream(cfg.seed, Stream::Split, 2 * seed as u64),
    )?;
    let test_set = make_toy_dataset(
        alpha,
        cfg.n_test,
        &mut stream(cfg.seed, Stream::Split, 2 * seed as u64 + 1),
    )?;
    let Targets::Values(test_y) = &test_set.targets else {
        unreachable!("toy data is regression")
    };
    let eval_cfg = SymmetrizationConfig::new(cfg.k_eval, cfg.eval_samples)?;
    let (eps, perms) = draw_noise_and_perms(&mut stream(cfg.seed, Stream::Eval, seed as u64), &arch, eval_cfg);

    let one = |method: Method, k: usize| -> Result<(ToyRow, MeanFieldGaussian)> {
        let (q, _) = train(&train_set, &arch, &lik, &cfg.train_config(k, seed as u64))?;
        let pred = predictive_mean(&q, &arch, &test_set.inputs, Nonlinearity::Relu, &eps, None)?;
        let spec = ObjectiveSpec {
            arch: &arch,
            batch: &train_set,
            likelihood: &lik,
            act: Nonlinearity::Relu,
            prior: &prior,
        };
        let rep = evaluate_elbo(&q, spec, &eps, &perms)?;
        let n = cfg.n_train as f64;
        let sig = q.sigma();
        Ok((
            ToyRow {
                alpha,
                seed,
                method,
                mse: mse(&pred, test_y)?,
                elbo_vi: rep.elbo_vi / n,
                elbo_k: rep.elbo_k / n,
                mutual_info: rep.mutual_info / n,
                mu1: q.mu()[0],
                mu2: q.mu()[1],
                sigma1: sig[0],
                sigma2: sig[1],
            },
            q,
        ))
    };
    Ok(FitOutcome {
        mfvi: one(Method::Mfvi, 1)?,
        sgm: one(Method::Sgm, cfg.k)?,
        train: train_set,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = fsum(v.iter().copied()) / n;
    let var = if v.len() > 1 {
        fsum(v.iter().map(|x| (x - m) * (x - m))) / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Train MFVI and SGM on each `(α, seed)` and evaluate both.
pub fn run_toy_bnn(cfg: &ToyConfig, jobs: usize) -> Result<ToyResults> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &a in &cfg.alphas {
        for s in 0..cfg.seeds {
            points.push((a, s));
        }
    }
    let fits: Vec<(f64, usize, FitOutcome)> =
        parallel_map(points, jobs, |&(a, s)| run_pair(cfg, a, s).map(|f| (a, s, f)))
            .into_iter()
            .collect::<Result<_>>()?;

    let rows: Vec<ToyRow> = fits
        .iter()
        .flat_map(|(_, _, f)| [f.mfvi.0.clone(), f.sgm.0.clone()])
        .collect();
    let mut summary = Vec::new();
    for &a in &cfg.alphas {
        for method in [Method::Mfvi, Method::Sgm] {
            let sel: Vec<&ToyRow> = rows.iter().filter(|r| r.alpha == a && r.method == method).collect();
            let (mse_mean, mse_std) = mean_std(&sel.iter().map(|r| r.mse).collect::<Vec<_>>());
            let (elbo_k_mean, elbo_k_std) = mean_std(&sel.iter().map(|r| r.elbo_k).collect::<Vec<_>>());
            let (elbo_vi_mean, _) = mean_std(&sel.iter().map(|r| r.elbo_vi).collect::<Vec<_>>());
            summary.push(ToySummary {
                alpha: a,
                method,
                seeds: sel.len(),
                mse_mean,
                mse_std,
                elbo_k_mean,
                elbo_k_std,
                elbo_vi_mean,
            });
        }
    }

    let mut dump = None;
    if let Some(da) = cfg.dump_alpha {
        let found = fits.iter().find(|(a, s, _)| (*a - da).abs() < 1e-12 && *s == 0);
        let owned;
        let f = match found {
            Some((_, _, f)) => f,
            None => {
                owned = run_pair(cfg, da, 0)?;
                &owned
            }
        };
        let grid = GridSpec {
            c: cfg.grid_c,
            n: cfg.grid_n,
        };
        let post = exact_toy_posterior(&f.train, &PriorSpec::new(cfg.prior_std)?, cfg.noise_std, grid)?;
        let (mfvi_q, mfvi_qg) = density_grids(&f.mfvi.1, &grid)?;
        let (sgm_q, sgm_qg) = density_grids(&f.sgm.1, &grid)?;
        dump = Some(GridDump {
            alpha: da,
            grid,
            posterior: post.density(),
            mfvi_q,
            mfvi_qg,
            sgm_q,
            sgm_qg,
        });
    }
    let fit = dump.as_ref().map(analyze_fit);
    Ok(ToyResults {
        rows,
        summary,
        dump,
        fit,
    })
}
