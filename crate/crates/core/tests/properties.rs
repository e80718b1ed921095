use proptest::prelude::*;
use spinbias::objective::encode;
use spinbias::problem::reflection;
use spinbias::{
    build_reduced_hamiltonian, decode, eigendecompose, eq3_residual, infidelity_and_gradient,
    rabi_probability, transfer_probability, BiasConstraint, BiasVector, EigenSystem, NetworkSpec,
    ParameterVector, TimeMode, TransferProblem,
};

fn eig(spec: NetworkSpec, bias: &[f64]) -> EigenSystem {
    eigendecompose(
        &build_reduced_hamiltonian(&spec, &BiasVector::new(bias.to_vec()).unwrap()).unwrap(),
    )
    .unwrap()
}

fn network() -> impl Strategy<Value = NetworkSpec> {
    (any::<bool>(), 3usize..=11).prop_map(|(ring, n)| {
        if ring {
            NetworkSpec::ring(n).unwrap()
        } else {
            NetworkSpec::chain(n).unwrap()
        }
    })
}

fn biased_network() -> impl Strategy<Value = (NetworkSpec, Vec<f64>)> {
    network().prop_flat_map(|spec| (Just(spec), prop::collection::vec(-6.0f64..6.0, spec.size())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rabi_matches_two_chain(c1 in -8.0f64..8.0, c2 in -8.0f64..8.0, t in 0.0f64..30.0) {
        let e = eig(NetworkSpec::chain(2).unwrap(), &[c1, c2]);
        let p = transfer_probability(&e, 1, 2, t).unwrap();
        prop_assert!((p - rabi_probability(c1, c2, t)).abs() < 1e-12);
    }

    #[test]
    fn probability_is_conserved((spec, bias) in biased_network(), t in 0.0f64..40.0) {
        let e = eig(spec, &bias);
        let total: f64 = (1..=spec.size()).map(|o| transfer_probability(&e, 1, o, t).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
    }

    #[test]
    fn transfer_is_time_symmetric((spec, bias) in biased_network(), t in 0.0f64..40.0, a in 1usize..=11, b in 1usize..=11) {
        let (a, b) = (1 + (a - 1) % spec.size(), 1 + (b - 1) % spec.size());
        let e = eig(spec, &bias);
        prop_assert!((transfer_probability(&e, a, b, t).unwrap() - transfer_probability(&e, b, a, t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn unbiased_rings_are_translation_invariant(n in 3usize..=13, d in 0usize..13, m in 0usize..13, t in 0.0f64..30.0) {
        let e = eig(NetworkSpec::ring(n).unwrap(), &vec![0.0; n]);
        let (d, m) = (d % n, m % n);
        let base = transfer_probability(&e, 1, 1 + d, t).unwrap();
        let shifted = transfer_probability(&e, 1 + m, 1 + (m + d) % n, t).unwrap();
        prop_assert!((base - shifted).abs() < 1e-12);
    }

    #[test]
    fn eq3_residual_identity((spec, bias) in biased_network(), t in 0.0f64..30.0) {
        let e = eig(spec, &bias);
        let out = spec.size();
        let p = transfer_probability(&e, 1, out, t).unwrap();
        let (residual, _) = eq3_residual(&e, 1, out, t).unwrap();
        prop_assert!((residual - (2.0 - 2.0 * p.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn box_decode_stays_in_bounds(n in 3usize..=13, lo in -20.0f64..5.0, width in 0.5f64..120.0, raw in prop::collection::vec(-40.0f64..40.0, 14)) {
        let problem = TransferProblem::new(
            NetworkSpec::ring(n).unwrap(), 1, 2, TimeMode::Bounded { t_max: 9.0 }, BiasConstraint::boxed(lo, lo + width),
        ).unwrap();
        let (bias, t) = decode(&ParameterVector(raw[..n + 1].to_vec()), &problem).unwrap();
        prop_assert!(bias.values().iter().all(|&v| v >= lo && v <= lo + width));
        prop_assert!(t > 0.0 && t <= 9.0);
    }

    #[test]
    fn symmetric_decode_respects_reflection(n in 3usize..=15, k in 2usize..=8, raw in prop::collection::vec(-5.0f64..5.0, 9)) {
        let k = 2 + (k - 2) % (n.div_ceil(2) - 1);
        let spec = NetworkSpec::ring(n).unwrap();
        let problem = TransferProblem::new(spec, 1, k, TimeMode::Free, BiasConstraint::SYMMETRIC).unwrap();
        let dim = problem.param_dim();
        prop_assume!(dim <= raw.len());
        let (bias, _) = decode(&ParameterVector(raw[..dim].to_vec()), &problem).unwrap();
        let map = reflection(&spec, 1, k).unwrap();
        for (j, &image) in map.iter().enumerate().skip(1) {
            prop_assert_eq!(bias.at(j), bias.at(image));
        }
    }

    #[test]
    fn encode_inverts_decode(n in 3usize..=11, raw in prop::collection::vec(-3.0f64..3.0, 12), boxed in any::<bool>()) {
        let constraint = if boxed { BiasConstraint::symmetric_boxed(-2.0, 7.0) } else { BiasConstraint::SYMMETRIC };
        let problem = TransferProblem::new(NetworkSpec::ring(n).unwrap(), 1, 2, TimeMode::Free, constraint).unwrap();
        let x = ParameterVector(raw[..problem.param_dim()].to_vec());
        let (bias, t) = decode(&x, &problem).unwrap();
        let back = encode(&bias, t, &problem).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }

    #[test]
    fn constant_shift_is_a_global_phase((spec, bias) in biased_network(), c in -10.0f64..10.0, t in 0.1f64..20.0) {
        let problem = TransferProblem::new(spec, 1, spec.size(), TimeMode::Fixed { t }, BiasConstraint::UNCONSTRAINED).unwrap();
        let base = infidelity_and_gradient(&ParameterVector(bias.clone()), &problem).unwrap();
        let shifted: Vec<f64> = bias.iter().map(|b| b + c).collect();
        let moved = infidelity_and_gradient(&ParameterVector(shifted), &problem).unwrap();
        prop_assert!((base.infidelity - moved.infidelity).abs() < 1e-10);
        prop_assert!(base.gradient.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn mirror_symmetric_chains_align_end_rows(k in 2usize..=9, raw in prop::collection::vec(-8.0f64..8.0, 9)) {
        let bias: Vec<f64> = (0..k).map(|i| raw[i.min(k - 1 - i)]).collect();
        let e = eig(NetworkSpec::chain(k).unwrap(), &bias);
        // Eigenvector error of a backward-stable solver is about u·‖H‖/gap.
        let gap = e.values().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let norm = bias.iter().map(|b| b.abs()).fold(0.0, f64::max) + 2.0;
        let tol = 1e-10f64.max(16.0 * f64::EPSILON * norm / gap);
        for n in 0..k {
            let d = (e.component(1, n).abs() - e.component(k, n).abs()).abs();
            prop_assert!(d < tol, "n={} diff {:e} tol {:e} gap {:e}", n, d, tol, gap);
        }
    }
}
