//! `symvi` command line: one subcommand per experiment.
//!
//! Settings resolve in order: key defaults, `--config` file, dedicated flags,
//! then `--set key=value`. The resolved settings are written next to the
//! results before any computation starts.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::{keys_help, Experiment, KeySpec, Settings, Source, UsageError};

use crate::error::Error;
use crate::experiments::{
    estimate_threshold, load_mnist_idx, mnist_paths, run_mnist, run_mode_seeking, run_proximity, run_toy_bnn,
    write_csv, ManifestWriter,
};
use crate::selftest::run_selftest;

#[derive(Parser, Debug)]
#[command(
    name = "symvi",
    version,
    about = "Permutation-symmetrized variational inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reverse-KL Gaussian fits to a two-mode mixture.
    ModeSeeking(RunArgs),
    /// Two-weight ReLU network with an exact grid posterior.
    ToyBnn(RunArgs),
    /// MFVI versus symmetrized VI on MNIST.
    Mnist(RunArgs),
    /// Nearest non-trivial permutation versus the proximity bound.
    Proximity(RunArgs),
    /// Gradient checks and group-axiom suites.
    Selftest(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: runs/<subcommand>].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Override any key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated alphas.
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated sigmas.
    #[arg(long)]
    sigma: Option<String>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    subset: Option<String>,
    #[arg(long = "mnist-dir", value_name = "DIR")]
    mnist_dir: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut add = |name: &'static str, val: &Option<String>| {
            if let Some(x) = val {
                v.push((name, x.clone()));
            }
        };
        add("seed", &self.seed.map(|s| s.to_string()));
        add("alpha", &self.alpha);
        add("sigma", &self.sigma);
        add("hidden", &self.hidden);
        add("k", &self.k);
        add("epochs", &self.epochs);
        add("lr", &self.lr);
        add("batch", &self.batch);
        add("subset", &self.subset);
        add("mnist-dir", &self.mnist_dir);
        v
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for exp in Experiment::all() {
        cmd = cmd.mut_subcommand(exp.name(), |c| c.after_help(keys_help(exp)));
    }
    cmd
}

/// Resolve settings for `exp` from the parsed arguments.
fn resolve(exp: Experiment, args: &RunArgs) -> Result<Settings, UsageError> {
    let mut s = Settings::defaults(exp);
    if let Some(p) = &args.config {
        let text = fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
        s.apply_text(&text, &p.display().to_string())?;
    }
    for (flag, value) in args.flags() {
        match exp.flag_key(flag) {
            Some(k) => s.set(k, &value)?,
            None => return Err(UsageError(format!("--{flag} does not apply to {}", exp.name()))),
        }
    }
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(UsageError(format!("--set expects KEY=VALUE, got '{kv}'")));
        };
        s.set(k.trim(), v)?;
    }
    s.validate()?;
    Ok(s)
}

fn jobs(args: &RunArgs) -> usize {
    args.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

struct Run<'a> {
    out: &'a Path,
    manifest: &'a mut ManifestWriter,
}

impl Run<'_> {
    fn csv<S: serde::Serialize>(&mut self, name: &str, rows: &[S]) -> crate::Result<()> {
        write_csv(&self.out.join(name), rows)?;
        self.manifest.add_output(name);
        Ok(())
    }

    fn json<S: serde::Serialize>(&mut self, name: &str, value: &S) -> crate::Result<()> {
        fs::write(self.out.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.manifest.add_output(name);
        Ok(())
    }
}

#[derive(serde::Serialize)]
struct ThresholdRow {
    sigma: f64,
    threshold: Option<f64>,
}

fn execute(s: &Settings, jobs: usize, run: &mut Run<'_>) -> Result<(), Failure> {
    match s.experiment {
        Experiment::ModeSeeking => {
            let cfg = s.mode_seeking()?;
            let rows = run_mode_seeking(&cfg, jobs)?;
            run.csv("results.csv", &rows)?;
            let th: Vec<ThresholdRow> = cfg
                .sigmas
                .iter()
                .map(|&sigma| ThresholdRow {
                    sigma,
                    threshold: estimate_threshold(&rows, sigma),
                })
                .collect();
            for t in &th {
                match t.threshold {
                    Some(a) => println!("sigma {}: threshold alpha {a:.3}", t.sigma),
                    None => println!("sigma {}: no threshold crossing in the sweep", t.sigma),
                }
            }
            run.csv("thresholds.csv", &th)?;
        }
        Experiment::ToyBnn => {
            let cfg = s.toy()?;
            let r = run_toy_bnn(&cfg, jobs)?;
            run.csv("results.csv", &r.rows)?;
            run.csv("summary.csv", &r.summary)?;
            for x in &r.summary {
                println!(
                    "alpha {:<5} {:?}: mse {:.4} ± {:.4}, elbo_k {:.5}",
                    x.alpha, x.method, x.mse_mean, x.mse_std, x.elbo_k_mean
                );
            }
            if let Some(d) = &r.dump {
                run.csv("grid.csv", &d.rows())?;
            }
            if let Some(f) = &r.fit {
                run.json("fit.json", f)?;
            }
        }
        Experiment::Mnist => {
            let (cfg, dir) = s.mnist()?;
            let dir = dir.ok_or_else(|| Failure::Usage("mnist needs --mnist-dir".into()))?;
            let data = load_mnist_idx(&mnist_paths(&dir)?)?;
            let (rows, summary) = run_mnist(&data, &cfg, jobs)?;
            run.csv("results.csv", &rows)?;
            run.csv("summary.csv", &summary)?;
            for x in &summary {
                println!(
                    "hidden {} {:?} K={}: accuracy {:.4} ± {:.4}",
                    x.hidden, x.method, x.k, x.accuracy_mean, x.accuracy_std
                );
            }
        }
        Experiment::Proximity => {
            let rows = run_proximity(&s.proximity()?)?;
            for r in &rows {
                println!(
                    "width {}: mean ratio {:.4}, max {:.4}, bound {:.4}, violations {}",
                    r.width, r.mean_ratio, r.max_ratio, r.bound_ratio, r.violations
                );
            }
            run.csv("results.csv", &rows)?;
        }
        Experiment::Selftest => {
            let report = run_selftest(&s.selftest()?)?;
            for x in &report.suites {
                println!("{:<28} {}/{} (worst {:.2e})", x.name, x.passed, x.total, x.worst);
            }
            run.csv("selftest.csv", &report.suites)?;
            if !report.all_passed() {
                return Err(Failure::Runtime("selftest failures".into()));
            }
        }
    }
    Ok(())
}

fn dispatch(m: &ArgMatches) -> Result<(), Failure> {
    let cli = Cli::from_arg_matches(m).map_err(|e| Failure::Usage(e.to_string()))?;
    let (exp, args) = match &cli.command {
        Command::ModeSeeking(a) => (Experiment::ModeSeeking, a),
        Command::ToyBnn(a) => (Experiment::ToyBnn, a),
        Command::Mnist(a) => (Experiment::Mnist, a),
        Command::Proximity(a) => (Experiment::Proximity, a),
        Command::Selftest(a) => (Experiment::Selftest, a),
    };
    let settings = resolve(exp, args)?;
    if exp == Experiment::Mnist && settings.mnist()?.1.is_none() {
        return Err(Failure::Usage("mnist needs --mnist-dir".into()));
    }
    let out = args.out.clone().unwrap_or_else(|| Path::new("runs").join(exp.name()));

    let mut manifest_cfg: BTreeMap<String, String> = settings.values.clone();
    manifest_cfg.insert("jobs".into(), jobs(args).to_string());
    let mut manifest = ManifestWriter::start(&out, exp.name(), manifest_cfg)?;
    let outcome = fs::write(out.join("config.txt"), settings.to_text())
        .map_err(|e| Failure::Runtime(e.to_string()))
        .and_then(|()| {
            manifest.add_output("config.txt");
            execute(
                &settings,
                jobs(args),
                &mut Run {
                    out: &out,
                    manifest: &mut manifest,
                },
            )
        });
    let msg = match &outcome {
        Ok(()) => Ok(()),
        Err(Failure::Usage(m) | Failure::Runtime(m)) => Err(m.clone()),
    };
    manifest.finish(msg)?;
    outcome
}

/// Run the CLI on `args` (program name first) and return the exit code:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&m) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
