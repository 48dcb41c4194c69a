use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rvopt_core::problem::Weights;
use rvopt_core::smoothing::{softmin_lp_with_gradient, softmin_lse_with_gradient};
use rvopt_core::transcription::{disjunctive_residuals, full_gradient, smooth_residuals};
use rvopt_core::{generate, warm_start, GeneratorConfig, SmoothingConfig};

fn softmins(c: &mut Criterion) {
    let v: Vec<f64> = (0..40).map(|k| 0.1 + (k as f64 * 0.37).sin().abs()).collect();
    c.bench_function("softmin_lp n=40", |b| b.iter(|| softmin_lp_with_gradient(black_box(&v), 3, 1e-3)));
    c.bench_function("softmin_lse n=40", |b| b.iter(|| softmin_lse_with_gradient(black_box(&v), 100.0)));
}

fn residuals(c: &mut Criterion) {
    let inst = generate(&GeneratorConfig::new(1, 10)).unwrap();
    let x = warm_start(&inst).unwrap();
    let cfg = SmoothingConfig::default();
    c.bench_function("residuals m_a=10", |b| {
        b.iter(|| {
            let s = smooth_residuals(black_box(&x), &inst).unwrap();
            let d = disjunctive_residuals(black_box(&x), &inst, &cfg).unwrap();
            (s, d)
        })
    });
    let n_eq = smooth_residuals(&x, &inst).unwrap().eq.len() + disjunctive_residuals(&x, &inst, &cfg).unwrap().eq.len();
    let n_ineq = smooth_residuals(&x, &inst).unwrap().ineq.len();
    let w = Weights { objective: 1.0, eq: vec![0.5; n_eq], ineq: vec![0.5; n_ineq] };
    c.bench_function("full_gradient m_a=10", |b| b.iter(|| full_gradient(black_box(&x), &inst, &cfg, &w).unwrap()));
}

criterion_group!(benches, softmins, residuals);
criterion_main!(benches);
