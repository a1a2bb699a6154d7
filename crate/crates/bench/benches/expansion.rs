use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smallnoise_bench::{coefficients, noise, preset};
use smallnoise_core::multiindex::{drift_order_term, OrderTermPlan};
use smallnoise_core::{
    integrate_full, solve_coefficients, solve_coefficients_linear_model, FieldRef, MultiIndex, Polynomial, ScalarField,
    VectorField,
};

fn cubic(dim: usize) -> Polynomial {
    let terms = (0..=3)
        .flat_map(|n| MultiIndex::all_of_length(dim, n))
        .enumerate()
        .map(|(i, a)| (a, 1.0 / (1.0 + i as f64)));
    Polynomial::new(dim, terms)
}

fn order_terms(c: &mut Criterion) {
    let mut group = c.benchmark_group("order_term");
    for (dim, k) in [(1, 3), (3, 3), (3, 5)] {
        let field = VectorField::from_polynomials(vec![cubic(dim); dim]);
        let u = coefficients(dim, k);
        let refs: Vec<&[f64]> = u.iter().map(|v| v.as_slice()).collect();
        group.bench_function(BenchmarkId::new("drift", format!("d{dim}_k{k}")), |b| {
            b.iter(|| drift_order_term(k, std::slice::from_ref(&field), black_box(&refs)).unwrap())
        });
        let plan = OrderTermPlan::new(k, k, dim, 1);
        let component: &FieldRef = &field.components()[0];
        let family: [&dyn ScalarField; 1] = [component.as_ref()];
        group.bench_function(BenchmarkId::new("planned", format!("d{dim}_k{k}")), |b| {
            b.iter(|| plan.evaluate(&family, black_box(&refs)).unwrap())
        });
    }
    group.finish();
}

fn integrators(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate");
    group.sample_size(20);
    for name in ["gbm-small-vol", "ou-additive", "linear-matrix"] {
        let model = preset(name);
        let path = noise(&model, 10_000, 0);
        group.bench_function(BenchmarkId::new("full", name), |b| {
            b.iter(|| integrate_full(&model.model, 0.1, &model.x0, black_box(&path)).unwrap())
        });
    }
    group.finish();
}

fn expansions(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_coefficients");
    group.sample_size(10);
    for (name, k) in [("gbm-small-vol", 2), ("ou-additive", 2), ("linear-matrix", 3)] {
        let model = preset(name);
        let path = noise(&model, 2_000, 0);
        group.bench_function(BenchmarkId::new("generic", name), |b| {
            b.iter(|| solve_coefficients(&model.model, k, &model.x0, black_box(&path)).unwrap())
        });
        if let Some(linear) = &model.linear {
            group.bench_function(BenchmarkId::new("linear", name), |b| {
                b.iter(|| solve_coefficients_linear_model(linear, k, &model.x0, black_box(&path)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, order_terms, integrators, expansions);
criterion_main!(benches);
