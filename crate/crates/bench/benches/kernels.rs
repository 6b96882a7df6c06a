use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lenkf_bench::fixture;
use lenkf_core::filters::{enkf_step, kalman_step, lenkf_step, local_gain};
use lenkf_core::matrixkit::domination_factor;
use lenkf_core::theory::{localization_inconsistency, weak_interaction_lambda};
use lenkf_core::{CovMatrix, KalmanState, Streams};
use std::hint::black_box;

fn filters(c: &mut Criterion) {
    let mut g = c.benchmark_group("filter_step");
    for d in [100usize, 400] {
        let (sys, st, y) = fixture(d, 10);
        let streams = Streams::new(1);
        g.bench_with_input(BenchmarkId::new("lenkf", d), &d, |b, _| {
            b.iter(|| lenkf_step(&sys, &st, black_box(&y), &streams, 1).unwrap())
        });
        let mut global = st.clone();
        global.radius = None;
        g.bench_with_input(BenchmarkId::new("enkf", d), &d, |b, _| {
            b.iter(|| enkf_step(&sys, &global, black_box(&y), &streams, 1).unwrap())
        });
        let kf = KalmanState::standard(d);
        g.bench_with_input(BenchmarkId::new("kalman", d), &d, |b, _| {
            b.iter(|| kalman_step(&sys, &kf, black_box(&y)).unwrap())
        });
    }
    g.finish();
}

fn diagnostics(c: &mut Criterion) {
    let (sys, st, _) = fixture(100, 10);
    let cov = st.covariance();
    c.bench_function("local_gain_d100", |b| b.iter(|| local_gain(black_box(&cov), &sys, 1).unwrap()));
    let gain = local_gain(&cov, &sys, 1).unwrap().gain;
    c.bench_function("localization_inconsistency_d100", |b| {
        b.iter(|| localization_inconsistency(&sys, black_box(&cov), &gain, 4, 1).unwrap())
    });
    let e = CovMatrix::identity(100);
    c.bench_function("domination_factor_d100", |b| {
        b.iter(|| domination_factor(black_box(&e), &CovMatrix::identity(100), 0.04).unwrap())
    });
    c.bench_function("weak_interaction_lambda_d100", |b| {
        b.iter(|| weak_interaction_lambda(black_box(sys.dynamics()), sys.domain()))
    });
}

criterion_group!(benches, filters, diagnostics);
criterion_main!(benches);
