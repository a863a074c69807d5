use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};

use sparse_ode::benchmark::{run_replicate, BenchmarkConfig};
use sparse_ode::functionals::{gram_matrix, FunctionalMatrix, QuadratureGrid};
use sparse_ode::smoother::{local_poly_fit, smooth_curve, SmootherConfig};
use sparse_ode::sparse_solver::{fit_scad, lambda_max, scad_threshold, DescentOptions, ScadParams};

fn noisy_sine(n: usize) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    // deterministic pseudo-noise keeps the bench free of RNG setup
    let y = t
        .iter()
        .enumerate()
        .map(|(i, &x)| (6.0 * x).sin() + 0.1 * ((i as f64 * 12.9898).sin() * 43758.5453).fract())
        .collect();
    (t, y)
}

fn smoothing(c: &mut Criterion) {
    let (t, y) = noisy_sine(200);
    let cfg = SmootherConfig::new(0.15);
    c.bench_function("local_poly_fit n=200", |b| {
        b.iter(|| local_poly_fit(black_box(&t), black_box(&y), 0.5, &cfg).unwrap())
    });
    let quad = QuadratureGrid::default();
    c.bench_function("smooth_curve G=201", |b| {
        b.iter(|| smooth_curve(black_box(&t), black_box(&y), quad.points(), &cfg).unwrap())
    });
    let curves: Vec<_> = (0..20)
        .map(|k| {
            let yk: Vec<f64> = y.iter().map(|v| v * (1.0 + k as f64 / 20.0)).collect();
            smooth_curve(&t, &yk, quad.points(), &cfg).unwrap()
        })
        .collect();
    c.bench_function("gram_matrix p=20", |b| b.iter(|| gram_matrix(black_box(&curves), &quad).unwrap()));
}

fn solver(c: &mut Criterion) {
    c.bench_function("scad_threshold", |b| {
        let params = ScadParams::new(0.5);
        b.iter(|| scad_threshold(black_box(1.3), black_box(2.0), &params))
    });
    let mut group = c.benchmark_group("fit_scad");
    for p in [10, 20, 40] {
        let m = DMatrix::from_fn(p, p, |i, j| ((i * 7 + j * 3) as f64).sin());
        let q = &m * m.transpose() / p as f64 + DMatrix::identity(p, p) * 0.1;
        let b = DVector::from_fn(p, |i, _| (i as f64).cos());
        let fm = FunctionalMatrix::new(0, b, q).unwrap();
        let params = ScadParams::new(0.1 * lambda_max(&fm, 3.7));
        group.bench_with_input(BenchmarkId::from_parameter(p), &fm, |bch, fm| {
            bch.iter(|| fit_scad(fm, &params, None, DescentOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn replicate(c: &mut Criterion) {
    let mut cfg = BenchmarkConfig::default();
    cfg.simulation.n = 50;
    let mut group = c.benchmark_group("replicate");
    group.sample_size(10);
    group.bench_function("n=50", |b| b.iter(|| run_replicate(&cfg, 0).unwrap()));
    group.finish();
}

criterion_group!(benches, smoothing, solver, replicate);
criterion_main!(benches);
