//! Benchmarks of the hot kernels: path simulation, the iterated-integral
//! recursion, orthonormalization and the deterministic simplex moments.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use levychaos::suite::{mixed_model, simple_levy_orthonormal};
use levychaos::{
    gram_schmidt, iterate_on_path, path_seed, product_formula_check, simplex_integral,
    ElementaryTensor, IteratedSpec, JumpMeasure, MuMeasure, PathGenerator, StepFunction,
    TestFunction, DROP_TOL,
};

fn bench_simulation(c: &mut Criterion) {
    let family = mixed_model();
    let gen = PathGenerator::new(family.triplet(), 1.0, 1e-3).unwrap();
    let mut i = 0u64;
    c.bench_function("simulate_path_1k_steps", |b| {
        b.iter(|| {
            i += 1;
            black_box(gen.path(path_seed(1, i)));
        })
    });
}

fn bench_iterate(c: &mut Criterion) {
    let family = mixed_model();
    let gen = PathGenerator::new(family.triplet(), 1.0, 1e-3).unwrap();
    let path = gen.path(7);
    let spec = IteratedSpec::new(vec![0, 0, 0], ElementaryTensor::flat(3)).unwrap();
    c.bench_function("iterate_order3_1k_steps", |b| {
        b.iter(|| black_box(iterate_on_path(&spec, &path, &family).unwrap()))
    });
}

fn bench_product_formula(c: &mut Criterion) {
    let family = mixed_model();
    let gen = PathGenerator::new(family.triplet(), 1.0, 1e-3).unwrap();
    let path = gen.path(11);
    c.bench_function("product_formula_m2_1k_steps", |b| {
        b.iter(|| black_box(product_formula_check(&[0, 0], &family, &path).unwrap()))
    });
}

fn bench_gram_schmidt(c: &mut Criterion) {
    let mu = MuMeasure::new(
        1.0,
        JumpMeasure::atomic(vec![(0.5, 1.0), (1.0, 2.0), (-1.5, 0.5), (2.5, 0.3)]).unwrap(),
    )
    .unwrap();
    let sys: Vec<TestFunction> = (1..=5)
        .map(|n| TestFunction::new(0.0, move |x: f64| x.powi(n), format!("x^{n}"), &mu))
        .collect();
    c.bench_function("gram_schmidt_powers_4atoms", |b| {
        b.iter(|| black_box(gram_schmidt(&sys, &mu, DROP_TOL).unwrap()))
    });
}

fn bench_simplex(c: &mut Criterion) {
    let tensor = ElementaryTensor::new(
        1.0,
        vec![
            StepFunction::indicator(0.0, 0.5),
            StepFunction::indicator(0.25, 0.75),
            StepFunction::one(),
        ],
    );
    c.bench_function("simplex_integral_order3", |b| {
        b.iter(|| black_box(simplex_integral(&tensor, &[1.0, 2.0, 0.5], 1.0)))
    });
}

fn bench_isometry_reference(c: &mut Criterion) {
    let (family, _) = simple_levy_orthonormal();
    let spec = IteratedSpec::new(vec![0, 1, 0], ElementaryTensor::flat(3)).unwrap();
    c.bench_function("isometry_reference_order3", |b| {
        b.iter(|| black_box(levychaos::isometry_reference(&spec, &spec, &family, 1.0).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_simulation,
    bench_iterate,
    bench_product_formula,
    bench_gram_schmidt,
    bench_simplex,
    bench_isometry_reference
);
criterion_main!(benches);
