use std::path::Path;
use std::process::Command;

use symvi::experiments::{write_idx, RunManifest, RunStatus, IMAGES_MAGIC, LABELS_MAGIC};

fn symvi(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_symvi")).args(args).output().unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn help_lists_keys_and_sources() {
    let out = symvi(&["toy-bnn", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["alphas", "noise_std", "k_eval", "[published]", "[chosen]"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    for args in [
        vec!["toy-bnn", "--sigma", "2", "--out", o],
        vec!["proximity", "--set", "nonsense=1", "--out", o],
        vec!["proximity", "--set", "trials", "--out", o],
        vec!["proximity", "--hidden", "2", "--out", o],
        vec!["mnist", "--out", o],
        vec![
            "mnist",
            "--hidden",
            "10",
            "--k",
            "0",
            "--mnist-dir",
            "/nonexistent",
            "--out",
            o,
        ],
        vec!["no-such-command"],
    ] {
        let r = symvi(&args);
        assert_eq!(
            r.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&r.stderr)
        );
    }
    assert!(!out.exists(), "usage errors must not start a run");
}

#[test]
fn runtime_errors_exit_with_one_and_mark_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let r = symvi(&["mnist", "--mnist-dir", "/nonexistent", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.unwrap().contains("not found"));
}

#[test]
fn selftest_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let r = symvi(&[
        "selftest",
        "--set",
        "grad_seeds=5",
        "--set",
        "group_cases=20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let m = manifest(&out);
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!(m.experiment, "selftest");
    assert_eq!(m.config["grad_seeds"], "5");
    assert!(m.outputs.contains(&"selftest.csv".to_string()));
    assert!(out.join("config.txt").exists());
}

#[test]
fn config_file_then_flags_then_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\ntrials = 3\nwidths = 4\nseed = 1\n").unwrap();
    let out = dir.path().join("p");
    let r = symvi(&[
        "proximity",
        "--config",
        cfg.to_str().unwrap(),
        "--hidden",
        "4,5",
        "--set",
        "seed=9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = manifest(&out);
    assert_eq!(m.config["trials"], "3");
    assert_eq!(m.config["widths"], "4,5");
    assert_eq!(m.config["seed"], "9");
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn same_seed_same_bytes_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let r = symvi(&[
            "toy-bnn",
            "--alpha",
            "0.1",
            "--set",
            "seeds=2",
            "--set",
            "eval_samples=50",
            "--set",
            "k_eval=10",
            "--set",
            "dump_alpha=none",
            "--seed",
            "7",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        outputs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn mnist_runs_on_synthetic_idx() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    // Class c lights pixel c of a 4×4 image.
    let make = |n: usize| {
        let mut px = vec![0u8; n * 16];
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        for (i, &l) in labels.iter().enumerate() {
            px[i * 16 + l as usize] = 255;
        }
        (px, labels)
    };
    let (px, lab) = make(200);
    write_idx(
        &data.join("train-images-idx3-ubyte.gz"),
        IMAGES_MAGIC,
        &[200, 4, 4],
        &px,
        true,
    )
    .unwrap();
    write_idx(&data.join("train-labels-idx1-ubyte"), LABELS_MAGIC, &[200], &lab, false).unwrap();
    let (px, lab) = make(50);
    write_idx(
        &data.join("t10k-images-idx3-ubyte"),
        IMAGES_MAGIC,
        &[50, 4, 4],
        &px,
        false,
    )
    .unwrap();
    write_idx(&data.join("t10k-labels-idx1-ubyte"), LABELS_MAGIC, &[50], &lab, false).unwrap();

    let out = dir.path().join("out");
    let r = symvi(&[
        "mnist",
        "--mnist-dir",
        data.to_str().unwrap(),
        "--hidden",
        "8",
        "--k",
        "3",
        "--lr",
        "0.05",
        "--epochs",
        "20",
        "--batch",
        "20",
        "--set",
        "seeds=1",
        "--set",
        "eval_samples=20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let acc_col = rdr.headers().unwrap().iter().position(|h| h == "accuracy").unwrap();
    for row in &rows {
        let acc: f64 = row[acc_col].parse().unwrap();
        assert!(acc > 0.9, "separable task accuracy {acc}");
    }
}
