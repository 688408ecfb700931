use symvi::diffcore::Tensor;
use symvi::experiments::{
    encode_idx, exact_toy_posterior, load_split, local_maxima, make_toy_dataset, read_idx, run_mode_seeking, write_idx,
    GridSpec, ManifestWriter, ModeSeekingConfig, RunStatus, IMAGES_MAGIC, LABELS_MAGIC,
};
use symvi::models::Targets;
use symvi::rng::{normals, stream, Stream};
use symvi::variational::PriorSpec;
use symvi::weightspace::{apply_action, nearest_nontrivial, Architecture, GroupElement, SearchMode, WeightVector};
use symvi::Error;

#[test]
fn toy_dataset_follows_the_generator() {
    let d = make_toy_dataset(0.15, 500, &mut stream(0, Stream::Split, 0)).unwrap();
    assert_eq!(d.len(), 500);
    let Targets::Values(y) = &d.targets else { panic!() };
    for (x, t) in d.inputs.data().iter().zip(y.data()) {
        assert!((-10.0..=10.0).contains(x));
        assert_eq!(*t, 0.15 * x.abs());
    }
    let again = make_toy_dataset(0.15, 500, &mut stream(0, Stream::Split, 0)).unwrap();
    assert_eq!(d, again);
}

#[test]
fn grid_posterior_matches_closed_form() {
    // In the quadrant w₁ > 0 > w₂ each weight sees only one sign of x, so the
    // posterior there is an exact Gaussian; the mirrored quadrant is equal and
    // the other two carry negligible mass.
    let alpha = 0.5;
    let noise = 2.0;
    let data = make_toy_dataset(alpha, 100, &mut stream(3, Stream::Split, 0)).unwrap();
    let prior = PriorSpec::new(1.0).unwrap();
    let grid = GridSpec { c: 1.0, n: 401 };
    let post = exact_toy_posterior(&data, &prior, noise, grid).unwrap();

    let Targets::Values(y) = &data.targets else { panic!() };
    let var = noise * noise;
    let (mut a1, mut b1, mut a2, mut b2, mut yy) = (1.0, 0.0, 1.0, 0.0, 0.0);
    for (&x, &t) in data.inputs.data().iter().zip(y.data()) {
        if x > 0.0 {
            a1 += x * x / var;
            b1 += x * t / var;
        } else {
            a2 += x * x / var;
            b2 += x * t / var;
        }
        yy += t * t / (2.0 * var);
    }
    let tau = 2.0 * std::f64::consts::PI;
    let c = -50.0 * (tau * var).ln() - yy - tau.ln();
    let gauss = |a: f64, b: f64| 0.5 * (tau / a).ln() + b * b / (2.0 * a);
    let log_z = 2f64.ln() + c + gauss(a1, b1) + gauss(a2, b2);
    assert!((post.log_z - log_z).abs() < 1e-6, "{} vs {log_z}", post.log_z);

    let dens = post.density();
    assert!((grid.integrate(&dens) - 1.0).abs() < 1e-12);
    let n = grid.n;
    for i in 0..n {
        for j in 0..n {
            let (u, v) = (dens[i * n + j], dens[j * n + i]);
            assert!((u - v).abs() <= 1e-10 * u.max(v).max(1e-300), "asymmetry at {i},{j}");
        }
    }
    // Modes at the closed-form posterior means.
    let maxima = local_maxima(&grid, &dens);
    let m1 = b1 / a1;
    let m2 = b2 / a2;
    let h = grid.step();
    for &(w1, w2, _) in &maxima[..2] {
        let ok = ((w1 - m1).abs() <= h && (w2 - m2).abs() <= h) || ((w1 - m2).abs() <= h && (w2 - m1).abs() <= h);
        assert!(ok, "maximum at ({w1}, {w2}), modes ±({m1}, {m2})");
    }
}

#[test]
fn grid_posterior_modes_at_default_alpha() {
    let data = make_toy_dataset(0.2, 100, &mut stream(0, Stream::Split, 0)).unwrap();
    let grid = GridSpec { c: 1.0, n: 400 };
    let post = exact_toy_posterior(&data, &PriorSpec::new(1.0).unwrap(), 2.0, grid).unwrap();
    let maxima = local_maxima(&grid, &post.density());
    let h = grid.step();
    let mut found: Vec<(f64, f64)> = maxima[..2].iter().map(|m| (m.0, m.1)).collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(
        (found[0].0 + 0.2).abs() <= h && (found[0].1 - 0.2).abs() <= h,
        "{found:?}"
    );
    assert!(
        (found[1].0 - 0.2).abs() <= h && (found[1].1 + 0.2).abs() <= h,
        "{found:?}"
    );
}

#[test]
fn coarse_or_small_grid_is_rejected() {
    let data = make_toy_dataset(0.2, 100, &mut stream(0, Stream::Split, 0)).unwrap();
    let prior = PriorSpec::new(1.0).unwrap();
    assert!(exact_toy_posterior(&data, &prior, 2.0, GridSpec { c: 0.1, n: 201 }).is_err());
    assert!(exact_toy_posterior(&data, &prior, 2.0, GridSpec { c: 1.0, n: 9 }).is_err());
}

#[test]
fn idx_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let imgs: Vec<u8> = (0..3 * 4 * 5).map(|i| (i * 7 % 256) as u8).collect();
    let labels = [3u8, 0, 9];
    for gz in [false, true] {
        let ip = dir.path().join(format!("img{gz}"));
        let lp = dir.path().join(format!("lab{gz}"));
        write_idx(&ip, IMAGES_MAGIC, &[3, 4, 5], &imgs, gz).unwrap();
        write_idx(&lp, LABELS_MAGIC, &[3], &labels, gz).unwrap();
        let a = read_idx(&ip, IMAGES_MAGIC).unwrap();
        assert_eq!(a.dims, vec![3, 4, 5]);
        assert_eq!(a.data, imgs);
        let s = load_split(&ip, &lp).unwrap();
        assert_eq!(s.labels, vec![3, 0, 9]);
        assert_eq!(s.images.shape(), &[3, 20]);
        assert_eq!(s.images.get(1, 0), imgs[20] as f64 / 255.0);
    }
}

#[test]
fn idx_errors_name_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = encode_idx(IMAGES_MAGIC, &[2, 2, 2], &[1; 8]);
    bytes.truncate(bytes.len() - 3);
    let p = dir.path().join("short");
    std::fs::write(&p, &bytes).unwrap();
    let e = read_idx(&p, IMAGES_MAGIC).unwrap_err();
    assert!(matches!(e, Error::Format { .. }), "{e}");
    assert!(e.to_string().contains("expected 24 bytes, file has 21"), "{e}");

    let lp = dir.path().join("labels");
    write_idx(&lp, LABELS_MAGIC, &[2], &[1, 12], false).unwrap();
    let ip = dir.path().join("images");
    write_idx(&ip, IMAGES_MAGIC, &[2, 1, 1], &[0, 0], false).unwrap();
    assert!(load_split(&ip, &lp).unwrap_err().to_string().contains("label 12"));
    assert!(read_idx(&lp, IMAGES_MAGIC).is_err());
}

#[test]
fn zero_separation_has_no_ratio() {
    let cfg = ModeSeekingConfig {
        alphas: vec![0.0, 6.0],
        steps: 50,
        samples: 200,
        ..Default::default()
    };
    let rows = run_mode_seeking(&cfg, 1).unwrap();
    assert_eq!(rows[0].ratio, None);
    assert!(rows[1].ratio.is_some());
    assert!(rows.iter().all(|r| r.final_kl.is_finite() && r.det_cov > 0.0));
}

#[test]
fn duplicate_units_are_at_distance_zero() {
    let arch = Architecture::mlp(&[2, 12, 1]).unwrap();
    let mut w = normals(&mut stream(5, Stream::Init, 0), arch.num_params());
    // Copy unit 3 onto unit 9: incoming row, bias and outgoing weight.
    for k in 0..2 {
        w[9 * 2 + k] = w[3 * 2 + k];
    }
    w[24 + 9] = w[24 + 3];
    w[36 + 9] = w[36 + 3];
    let w = WeightVector::new(&arch, w).unwrap();
    let (g, d) = nearest_nontrivial(&w, SearchMode::TranspositionScan).unwrap();
    assert_eq!(d, 0.0);
    assert!(!g.is_identity());
    assert_eq!(apply_action(&g, &w).unwrap().as_slice(), w.as_slice());
}

#[test]
fn brute_force_matches_enumeration() {
    let arch = Architecture::mlp(&[1, 4, 1]).unwrap();
    let group = GroupElement::enumerate(&arch, 24).unwrap();
    for seed in 0..20 {
        let w = WeightVector::new(&arch, normals(&mut stream(seed, Stream::Init, 1), arch.num_params())).unwrap();
        let best = group
            .iter()
            .filter(|g| !g.is_identity())
            .map(|g| {
                let m = apply_action(g, &w).unwrap();
                w.as_slice()
                    .iter()
                    .zip(m.as_slice())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let (_, d) = nearest_nontrivial(&w, SearchMode::BruteForce).unwrap();
        assert!((d - best).abs() < 1e-12, "{d} vs {best}");
        let (_, scan) = nearest_nontrivial(&w, SearchMode::TranspositionScan).unwrap();
        assert!(scan >= d - 1e-12);
    }
}

#[test]
fn manifest_records_status() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = std::collections::BTreeMap::new();
    cfg.insert("seed".to_string(), "3".to_string());
    let m = ManifestWriter::start(dir.path(), "toy-bnn", cfg.clone()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(text.contains("\"running\""));
    let done = m.finish(Err("boom".into())).unwrap();
    assert_eq!(done.status, RunStatus::Failed);
    let back: symvi::experiments::RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(back, done);
    assert_eq!(back.config, cfg);
    assert_eq!(back.error.as_deref(), Some("boom"));
}

#[test]
fn tensor_shapes_are_checked() {
    assert!(Tensor::matrix(2, 3, vec![0.0; 5]).is_err());
}
