use proptest::prelude::*;

use symvi::diffcore::{fsum, Tensor};
use symvi::models::{forward, Nonlinearity};
use symvi::rng::{normals, stream, Rng, Stream};
use symvi::symmetrization::{draw_noise_and_perms, hk_values, symmetric_mixture_log_density, SymmetrizationConfig};
use symvi::variational::MeanFieldGaussian;
use symvi::weightspace::{apply_action, apply_action_flat, Architecture, GroupElement, WeightVector};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

fn arch_strategy() -> impl Strategy<Value = Architecture> {
    (
        1usize..4,
        prop::collection::vec(1usize..6, 1..4),
        1usize..3,
        any::<bool>(),
    )
        .prop_map(|(din, hidden, dout, bias)| {
            let mut dims = vec![din];
            dims.extend(hidden);
            dims.push(dout);
            let flags = vec![bias; dims.len() - 1];
            Architecture::new(&dims, &flags).unwrap()
        })
}

fn weights(arch: &Architecture, rng: &mut Rng) -> WeightVector {
    WeightVector::new(arch, normals(rng, arch.num_params())).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn identity_and_inverse(arch in arch_strategy(), seed in any::<u64>()) {
        let mut r = stream(seed, Stream::Eval, 0);
        let w = weights(&arch, &mut r);
        let g = GroupElement::sample_uniform(&mut r, &arch);
        let e = GroupElement::identity(&arch);
        let same = apply_action(&e, &w).unwrap();
        prop_assert_eq!(same.as_slice(), w.as_slice());
        let back = apply_action(&g.inverse(), &apply_action(&g, &w).unwrap()).unwrap();
        prop_assert_eq!(back.as_slice(), w.as_slice());
        prop_assert!(g.compose(&g.inverse()).unwrap().is_identity());
    }

    #[test]
    fn action_is_a_homomorphism(arch in arch_strategy(), seed in any::<u64>()) {
        let mut r = stream(seed, Stream::Eval, 1);
        let w = weights(&arch, &mut r);
        let g1 = GroupElement::sample_uniform(&mut r, &arch);
        let g2 = GroupElement::sample_uniform(&mut r, &arch);
        let g3 = GroupElement::sample_uniform(&mut r, &arch);
        let lhs = apply_action(&g1.compose(&g2).unwrap(), &w).unwrap();
        let rhs = apply_action(&g1, &apply_action(&g2, &w).unwrap()).unwrap();
        prop_assert_eq!(lhs.as_slice(), rhs.as_slice());
        let a = g1.compose(&g2).unwrap().compose(&g3).unwrap();
        let b = g1.compose(&g2.compose(&g3).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn action_preserves_norm(arch in arch_strategy(), seed in any::<u64>()) {
        let mut r = stream(seed, Stream::Eval, 2);
        let w = weights(&arch, &mut r);
        let g = GroupElement::sample_uniform(&mut r, &arch);
        let moved = apply_action(&g, &w).unwrap();
        prop_assert_eq!(moved.norm(), w.norm());
        let mut a: Vec<f64> = moved.as_slice().to_vec();
        let mut b: Vec<f64> = w.as_slice().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn action_preserves_function(arch in arch_strategy(), seed in any::<u64>(), tanh in any::<bool>()) {
        let mut r = stream(seed, Stream::Eval, 3);
        let w = weights(&arch, &mut r);
        let g = GroupElement::sample_uniform(&mut r, &arch);
        let x = Tensor::matrix(4, arch.input_dim(), normals(&mut r, 4 * arch.input_dim())).unwrap();
        let act = if tanh { Nonlinearity::Tanh } else { Nonlinearity::Relu };
        let f = forward(&w, &x, act).unwrap();
        let fg = forward(&apply_action(&g, &w).unwrap(), &x, act).unwrap();
        prop_assert!(close(f.data(), fg.data(), 1e-12), "{:?} vs {:?}", f.data(), fg.data());
    }

    #[test]
    fn pushforward_preserves_density_and_entropy(arch in arch_strategy(), seed in any::<u64>()) {
        let mut r = stream(seed, Stream::Eval, 4);
        let d = arch.num_params();
        let mu = normals(&mut r, d);
        let rho: Vec<f64> = normals(&mut r, d).iter().map(|v| 0.5 * v - 1.0).collect();
        let q = MeanFieldGaussian::new(mu.clone(), rho.clone()).unwrap();
        let g = GroupElement::sample_uniform(&mut r, &arch);
        let gq = MeanFieldGaussian::new(
            apply_action_flat(&g, &arch, &mu).unwrap(),
            apply_action_flat(&g, &arch, &rho).unwrap(),
        ).unwrap();
        let w = weights(&arch, &mut r);
        let gw = apply_action(&g, &w).unwrap();
        let a = gq.log_density(gw.as_slice()).unwrap();
        let b = q.log_density(w.as_slice()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        prop_assert!((gq.entropy() - q.entropy()).abs() <= 1e-12 * (1.0 + q.entropy().abs()));
    }

    #[test]
    fn symmetrized_density_is_invariant(seed in any::<u64>(), h1 in 1usize..4, h2 in 1usize..4) {
        let arch = Architecture::mlp(&[1, h1, h2, 1]).unwrap();
        let group = GroupElement::enumerate(&arch, 36).unwrap();
        let mut r = stream(seed, Stream::Eval, 5);
        let d = arch.num_params();
        let q = MeanFieldGaussian::new(normals(&mut r, d), vec![-0.5; d]).unwrap();
        let w = weights(&arch, &mut r);
        let g = GroupElement::sample_uniform(&mut r, &arch);
        let a = symmetric_mixture_log_density(&q, &arch, &w, &group).unwrap();
        let b = symmetric_mixture_log_density(&q, &arch, &apply_action(&g, &w).unwrap(), &group).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn estimator_bounds_per_draw(arch in arch_strategy(), seed in any::<u64>(), k in 1usize..6) {
        let mut r = stream(seed, Stream::Eval, 6);
        let d = arch.num_params();
        let q = MeanFieldGaussian::new(normals(&mut r, d), vec![-1.0; d]).unwrap();
        let cfg = SymmetrizationConfig::new(k, 3).unwrap();
        let (eps, perms) = draw_noise_and_perms(&mut r, &arch, cfg);
        let (hk, h1) = hk_values(&q, &arch, &eps, &perms).unwrap();
        prop_assert!(hk <= h1 + (k as f64).ln() + 1e-12);
        if k == 1 {
            prop_assert_eq!(hk, h1);
        }
    }

    #[test]
    fn fsum_ignores_order(mut v in prop::collection::vec(-1e12f64..1e12, 0..200), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        v.extend(v.clone().iter().map(|x| x * 1e-15));
        let a = fsum(v.iter().copied());
        v.shuffle(&mut stream(seed, Stream::Eval, 7));
        prop_assert_eq!(a, fsum(v.iter().copied()));
    }
}
