use std::collections::HashMap;

use symvi::diffcore::{eval_and_grad, Graph, Tensor};
use symvi::rng::{normals, stream, Stream};
use symvi::selftest::{gradient_suite, objective_suite, GRAD_TOL, OBJECTIVE_TOL};

#[test]
fn every_primitive_passes_on_100_seeds() {
    let suites = gradient_suite(100, 0).unwrap();
    assert!(suites.len() >= 20);
    for s in &suites {
        assert_eq!(s.total, 100, "{}", s.name);
        assert!(
            s.ok(),
            "{}: {}/{} worst {:e} (tol {GRAD_TOL:e})",
            s.name,
            s.passed,
            s.total,
            s.worst
        );
    }
}

#[test]
fn objective_spot_checks() {
    let s = objective_suite(30, 0).unwrap();
    assert!(
        s.ok(),
        "{}/{} worst {:e} (tol {OBJECTIVE_TOL:e})",
        s.passed,
        s.total,
        s.worst
    );
}

fn grad_of(
    build: impl Fn(&mut Graph, symvi::diffcore::NodeId) -> symvi::diffcore::NodeId,
    x: &[f64],
) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let p = g.param(&[x.len()]);
    let out = build(&mut g, p);
    g.set_output(out).unwrap();
    let mut b = HashMap::new();
    b.insert(p, Tensor::vector(x.to_vec()));
    let (v, grads) = eval_and_grad(&g, &b).unwrap();
    (v, grads.get(p).unwrap().data().to_vec())
}

#[test]
fn logsumexp_gradient_is_softmax() {
    let x = normals(&mut stream(1, Stream::Eval, 0), 7);
    let (v, gr) = grad_of(|g, p| g.logsumexp(p).unwrap(), &x);
    let z: f64 = x.iter().map(|a| a.exp()).sum();
    assert!((v - z.ln()).abs() < 1e-12);
    for (gi, xi) in gr.iter().zip(&x) {
        assert!((gi - xi.exp() / z).abs() < 1e-12);
    }
}

#[test]
fn tanh_and_square_closed_forms() {
    let x = normals(&mut stream(2, Stream::Eval, 0), 5);
    let (_, gr) = grad_of(
        |g, p| {
            let t = g.tanh(p).unwrap();
            g.sum(t).unwrap()
        },
        &x,
    );
    for (gi, xi) in gr.iter().zip(&x) {
        assert!((gi - (1.0 - xi.tanh().powi(2))).abs() < 1e-12);
    }
    let (v, gr) = grad_of(
        |g, p| {
            let s = g.square(p).unwrap();
            g.sum(s).unwrap()
        },
        &x,
    );
    assert!((v - x.iter().map(|a| a * a).sum::<f64>()).abs() < 1e-12);
    for (gi, xi) in gr.iter().zip(&x) {
        assert!((gi - 2.0 * xi).abs() < 1e-12);
    }
}

#[test]
fn matmul_gradient_closed_form() {
    // d/dA sum(A·B) = 1·Bᵀ.
    let mut r = stream(3, Stream::Eval, 0);
    let bdat = normals(&mut r, 12);
    let adat = normals(&mut r, 6);
    let mut g = Graph::new();
    let a = g.param(&[2, 3]);
    let b = g.constant(Tensor::matrix(3, 4, bdat.clone()).unwrap());
    let m = g.matmul(a, b).unwrap();
    let s = g.sum(m).unwrap();
    g.set_output(s).unwrap();
    let mut bind = HashMap::new();
    bind.insert(a, Tensor::matrix(2, 3, adat).unwrap());
    let (_, grads) = eval_and_grad(&g, &bind).unwrap();
    let ga = grads.get(a).unwrap();
    for i in 0..2 {
        for k in 0..3 {
            let expect: f64 = bdat[k * 4..k * 4 + 4].iter().sum();
            assert!((ga.get(i, k) - expect).abs() < 1e-12);
        }
    }
}
