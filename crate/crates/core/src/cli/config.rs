use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::experiments::{MnistConfig, ModeSeekingConfig, ProximityConfig, ToyConfig};
use crate::selftest::SelftestConfig;

/// Where a default comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// The published experimental setting.
    Published,
    /// Not stated in the published setup; picked here.
    Chosen,
    /// Run plumbing with no bearing on results.
    Plumbing,
}

impl Source {
    pub fn label(self) -> &'static str {
        match self {
            Source::Published => "published",
            Source::Chosen => "chosen",
            Source::Plumbing => "plumbing",
        }
    }
}

#[derive(Clone, Debug)]
pub struct KeySpec {
    pub name: &'static str,
    pub default: String,
    pub help: &'static str,
    pub source: Source,
}

fn key(name: &'static str, default: impl Display, help: &'static str, source: Source) -> KeySpec {
    KeySpec {
        name,
        default: default.to_string(),
        help,
        source,
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    ModeSeeking,
    ToyBnn,
    Mnist,
    Proximity,
    Selftest,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ModeSeeking => "mode-seeking",
            Experiment::ToyBnn => "toy-bnn",
            Experiment::Mnist => "mnist",
            Experiment::Proximity => "proximity",
            Experiment::Selftest => "selftest",
        }
    }

    pub fn all() -> [Experiment; 5] {
        [
            Experiment::ModeSeeking,
            Experiment::ToyBnn,
            Experiment::Mnist,
            Experiment::Proximity,
            Experiment::Selftest,
        ]
    }

    /// Config key a dedicated flag writes to, if the flag applies here.
    pub fn flag_key(self, flag: &str) -> Option<&'static str> {
        use Experiment::*;
        Some(match (self, flag) {
            (_, "seed") => "seed",
            (ModeSeeking | ToyBnn, "alpha") => "alphas",
            (ModeSeeking, "sigma") => "sigmas",
            (ModeSeeking | ToyBnn | Mnist, "lr") => "lr",
            (ToyBnn, "k") => "k",
            (Mnist, "k") => "ks",
            (Mnist, "hidden") => "hidden",
            (Proximity, "hidden") => "widths",
            (ToyBnn | Mnist, "epochs") => "epochs",
            (ToyBnn | Mnist, "batch") => "batch",
            (Mnist, "subset") => "subset",
            (Mnist, "mnist-dir") => "mnist_dir",
            _ => return None,
        })
    }

    pub fn keys(self) -> Vec<KeySpec> {
        use Source::*;
        match self {
            Experiment::ModeSeeking => {
                let d = ModeSeekingConfig::default();
                vec![
                    key(
                        "sigmas",
                        list(&d.sigmas),
                        "component std of the two-mode target",
                        Published,
                    ),
                    key("alphas", list(&d.alphas), "mode separations swept", Published),
                    key("scale_alphas", d.scale_alphas, "multiply each alpha by sigma", Chosen),
                    key("dim", d.dim, "dimension of the target", Chosen),
                    key("seeds", d.seeds, "fits per sweep point", Chosen),
                    key("steps", d.steps, "gradient steps per fit", Published),
                    key("samples", d.samples, "Monte Carlo draws per step", Published),
                    key("lr", d.lr, "SGD learning rate", Published),
                    key("init_std", "sigma", "initial isotropic std (number or 'sigma')", Chosen),
                    key("seed", d.seed, "master seed", Plumbing),
                ]
            }
            Experiment::ToyBnn => {
                let d = ToyConfig::default();
                vec![
                    key("alphas", list(&d.alphas), "slopes of y = alpha|x|", Published),
                    key("seeds", d.seeds, "repeats per alpha", Published),
                    key("n_train", d.n_train, "training points", Published),
                    key("n_test", d.n_test, "test points", Published),
                    key("batch", d.batch, "minibatch size", Published),
                    key("lr", d.lr, "Adam learning rate", Published),
                    key("epochs", d.epochs, "training epochs", Published),
                    key("k", d.k, "density terms for SGM training", Published),
                    key("k_eval", d.k_eval, "density terms for ELBO evaluation", Published),
                    key(
                        "eval_samples",
                        d.eval_samples,
                        "draws for MSE and ELBO evaluation",
                        Published,
                    ),
                    key("train_samples", d.train_samples, "draws per training step", Chosen),
                    key("noise_std", d.noise_std, "Gaussian likelihood std", Chosen),
                    key("prior_std", d.prior_std, "isotropic Gaussian prior std", Chosen),
                    key("mu_init_std", d.mu_init_std, "std of the initial means", Chosen),
                    key("sigma_init", d.sigma_init, "initial posterior std", Chosen),
                    key("grid_n", d.grid_n, "grid points per axis", Chosen),
                    key("grid_c", d.grid_c, "grid half-width", Chosen),
                    key(
                        "dump_alpha",
                        opt(&d.dump_alpha),
                        "alpha whose seed-0 densities are dumped, or none",
                        Chosen,
                    ),
                    key("seed", d.seed, "master seed", Plumbing),
                ]
            }
            Experiment::Mnist => {
                let d = MnistConfig::default();
                vec![
                    key(
                        "mnist_dir",
                        "none",
                        "directory with the four IDX files (.gz allowed)",
                        Plumbing,
                    ),
                    key("hidden", list(&d.hidden), "hidden widths", Published),
                    key("ks", list(&d.ks), "SGM density terms; MFVI always runs", Published),
                    key("seeds", d.seeds, "repeats per configuration", Published),
                    key("epochs", d.epochs, "training epochs", Published),
                    key("batch", d.batch, "minibatch size", Published),
                    key("lr", d.lr, "Adam learning rate", Published),
                    key(
                        "eval_samples",
                        d.eval_samples,
                        "draws in the predictive average",
                        Published,
                    ),
                    key("train_samples", d.train_samples, "draws per training step", Chosen),
                    key("prior_std", d.prior_std, "isotropic Gaussian prior std", Chosen),
                    key("sigma_init", d.sigma_init, "initial posterior std", Chosen),
                    key("subset", opt(&d.subset), "train on the first N images, or none", Chosen),
                    key("seed", d.seed, "master seed", Plumbing),
                ]
            }
            Experiment::Proximity => {
                let d = ProximityConfig::default();
                vec![
                    key("widths", list(&d.widths), "hidden widths", Chosen),
                    key("input_dim", d.input_dim, "input dimension", Chosen),
                    key("output_dim", d.output_dim, "output dimension", Chosen),
                    key("trials", d.trials, "random weight vectors per width", Chosen),
                    key("seed", d.seed, "master seed", Plumbing),
                ]
            }
            Experiment::Selftest => {
                let d = SelftestConfig::default();
                vec![
                    key("grad_seeds", d.grad_seeds, "random instances per primitive", Chosen),
                    key(
                        "objective_cases",
                        d.objective_cases,
                        "end-to-end objective checks",
                        Chosen,
                    ),
                    key("group_cases", d.group_cases, "random cases per group property", Chosen),
                    key("seed", d.seed, "master seed", Plumbing),
                ]
            }
        }
    }
}

/// Help text listing every key of an experiment.
pub fn keys_help(exp: Experiment) -> String {
    let keys = exp.keys();
    let w = keys.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let dw = keys.iter().map(|k| k.default.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (set with --config FILE or --set key=value):\n");
    for k in &keys {
        s.push_str(&format!(
            "  {:w$}  {:dw$}  [{}] {}\n",
            k.name,
            k.default,
            k.source.label(),
            k.help
        ));
    }
    s
}

/// Usage-level problem: bad key, bad value, or a value out of range.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Resolved flat settings, every key materialised.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settings {
    pub experiment: Experiment,
    pub values: BTreeMap<String, String>,
}

impl Settings {
    pub fn defaults(exp: Experiment) -> Self {
        Settings {
            experiment: exp,
            values: exp
                .keys()
                .into_iter()
                .map(|k| (k.name.to_string(), k.default))
                .collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(UsageError(format!(
                "unknown key '{key}' for {}; see --help",
                self.experiment.name()
            ))),
        }
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), UsageError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(UsageError(format!("{origin}:{}: expected key = value", n + 1)));
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key registered")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, UsageError> {
        let v = self.raw(key);
        v.parse().map_err(|_| UsageError(format!("{key}: cannot parse '{v}'")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, UsageError> {
        let v = self.raw(key);
        if v.is_empty() {
            return Err(UsageError(format!("{key}: empty list")));
        }
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| UsageError(format!("{key}: cannot parse '{}' in '{v}'", x.trim())))
            })
            .collect()
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, UsageError> {
        if self.raw(key) == "none" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    fn positive(&self, key: &str) -> Result<f64, UsageError> {
        let v: f64 = self.get(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(UsageError(format!("{key} must be positive, got {v}")))
        }
    }

    fn at_least<T: FromStr + PartialOrd + Display + Copy>(&self, key: &str, min: T) -> Result<T, UsageError> {
        let v: T = self.get(key)?;
        if v >= min {
            Ok(v)
        } else {
            Err(UsageError(format!("{key} must be at least {min}, got {v}")))
        }
    }

    fn list_at_least(&self, key: &str, min: usize) -> Result<Vec<usize>, UsageError> {
        let v: Vec<usize> = self.list(key)?;
        match v.iter().find(|&&x| x < min) {
            Some(x) => Err(UsageError(format!(
                "{key}: every value must be at least {min}, got {x}"
            ))),
            None => Ok(v),
        }
    }

    pub fn mode_seeking(&self) -> Result<ModeSeekingConfig, UsageError> {
        let init = self.raw("init_std");
        Ok(ModeSeekingConfig {
            sigmas: self.list("sigmas")?,
            alphas: self.list("alphas")?,
            scale_alphas: self.get("scale_alphas")?,
            dim: self.at_least("dim", 1)?,
            seeds: self.at_least("seeds", 1)?,
            steps: self.get("steps")?,
            samples: self.at_least("samples", 1)?,
            lr: self.positive("lr")?,
            init_std: if init == "sigma" {
                None
            } else {
                Some(self.positive("init_std")?)
            },
            seed: self.get("seed")?,
        })
    }

    pub fn toy(&self) -> Result<ToyConfig, UsageError> {
        let cfg = ToyConfig {
            alphas: self.list("alphas")?,
            seeds: self.at_least("seeds", 1)?,
            n_train: self.at_least("n_train", 1)?,
            n_test: self.at_least("n_test", 1)?,
            batch: self.at_least("batch", 1)?,
            lr: self.positive("lr")?,
            epochs: self.get("epochs")?,
            k: self.at_least("k", 1)?,
            k_eval: self.at_least("k_eval", 1)?,
            eval_samples: self.at_least("eval_samples", 1)?,
            train_samples: self.at_least("train_samples", 1)?,
            noise_std: self.positive("noise_std")?,
            prior_std: self.positive("prior_std")?,
            mu_init_std: self.get("mu_init_std")?,
            sigma_init: self.positive("sigma_init")?,
            grid_n: self.at_least("grid_n", 3)?,
            grid_c: self.positive("grid_c")?,
            dump_alpha: self.optional("dump_alpha")?,
            seed: self.get("seed")?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn mnist(&self) -> Result<(MnistConfig, Option<PathBuf>), UsageError> {
        let cfg = MnistConfig {
            hidden: self.list_at_least("hidden", 1)?,
            ks: self.list_at_least("ks", 1)?,
            seeds: self.at_least("seeds", 1)?,
            epochs: self.get("epochs")?,
            batch: self.at_least("batch", 1)?,
            lr: self.positive("lr")?,
            eval_samples: self.at_least("eval_samples", 1)?,
            train_samples: self.at_least("train_samples", 1)?,
            prior_std: self.positive("prior_std")?,
            sigma_init: self.positive("sigma_init")?,
            subset: self.optional("subset")?,
            seed: self.get("seed")?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok((cfg, self.optional("mnist_dir")?))
    }

    pub fn proximity(&self) -> Result<ProximityConfig, UsageError> {
        Ok(ProximityConfig {
            widths: self.list_at_least("widths", 3)?,
            input_dim: self.at_least("input_dim", 1)?,
            output_dim: self.at_least("output_dim", 1)?,
            trials: self.at_least("trials", 1)?,
            seed: self.get("seed")?,
        })
    }

    pub fn selftest(&self) -> Result<SelftestConfig, UsageError> {
        Ok(SelftestConfig {
            grad_seeds: self.at_least("grad_seeds", 1)?,
            objective_cases: self.get("objective_cases")?,
            group_cases: self.get("group_cases")?,
            seed: self.get("seed")?,
        })
    }

    /// Parse into the experiment's config, reporting the first invalid key.
    pub fn validate(&self) -> Result<(), UsageError> {
        match self.experiment {
            Experiment::ModeSeeking => self.mode_seeking().map(drop),
            Experiment::ToyBnn => self.toy().map(drop),
            Experiment::Mnist => self.mnist().map(drop),
            Experiment::Proximity => self.proximity().map(drop),
            Experiment::Selftest => self.selftest().map(drop),
        }
    }
}
