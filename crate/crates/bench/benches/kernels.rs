use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use spinbias::{
    build_reduced_hamiltonian, eigendecompose, infidelity_and_gradient, minimize, BiasConstraint,
    BiasVector, LbfgsOptions, NetworkSpec, ParameterVector, TimeMode, TransferProblem,
};

fn ring13_bias() -> Vec<f64> {
    (0..13).map(|i| ((i * 7) % 5) as f64 - 2.0).collect()
}

fn eigen(c: &mut Criterion) {
    let spec = NetworkSpec::ring(13).unwrap();
    let h = build_reduced_hamiltonian(&spec, &BiasVector::new(ring13_bias()).unwrap()).unwrap();
    c.bench_function("eigendecompose_ring13", |b| {
        b.iter(|| eigendecompose(black_box(&h)).unwrap())
    });
}

fn gradient(c: &mut Criterion) {
    let problem = TransferProblem::new(
        NetworkSpec::ring(13).unwrap(),
        1,
        5,
        TimeMode::Free,
        BiasConstraint::UNCONSTRAINED,
    )
    .unwrap();
    let mut x = ring13_bias();
    x.push(1.5);
    let x = ParameterVector(x);
    c.bench_function("infidelity_and_gradient_ring13", |b| {
        b.iter(|| infidelity_and_gradient(black_box(&x), &problem).unwrap())
    });
}

fn lbfgs(c: &mut Criterion) {
    let problem = TransferProblem::new(
        NetworkSpec::ring(9).unwrap(),
        1,
        3,
        TimeMode::Fixed { t: 4.0 },
        BiasConstraint::UNCONSTRAINED,
    )
    .unwrap();
    let x = ParameterVector((0..9).map(|i| (i as f64 * 0.37).sin()).collect());
    let opts = LbfgsOptions::default();
    c.bench_function("minimize_ring9_fixed_time", |b| {
        b.iter(|| minimize(&problem, black_box(&x), &opts).unwrap())
    });
}

criterion_group!(benches, eigen, gradient, lbfgs);
criterion_main!(benches);
