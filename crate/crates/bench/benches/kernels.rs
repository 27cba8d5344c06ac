use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dropin_core::data::{gen_synthetic_redundant, SynthParams};
use dropin_core::readout::{rls_init, Readout};
use dropin_core::reservoir::{
    init_weights, spectral_radius, spectral_radius_iterative, update_state, ReservoirConfig,
    ReservoirState, POWER_MAX_ITER, POWER_TOL,
};
use dropin_core::{ablation_curve, train_standard, DropInConfig, TaskMode};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

fn bench_update_state(c: &mut Criterion) {
    let mut group = c.benchmark_group("update_state");
    for n_r in [50, 100, 300, 500] {
        let w = init_weights(&ReservoirConfig::new(4, n_r, 0.5).with_seed(1)).unwrap();
        let u = DVector::from_vec(vec![0.3, -0.1, 0.7, 0.2]);
        let state = ReservoirState::zeros(n_r);
        group.bench_with_input(BenchmarkId::from_parameter(n_r), &n_r, |b, _| {
            b.iter(|| update_state(black_box(&state), &u, &w, 0.5).unwrap())
        });
    }
    group.finish();
}

fn bench_rls_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("rls_step");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n_f in [50, 100, 300, 500] {
        let xs: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..n_f).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut rls = rls_init(1.0, n_f, 0.9999995).unwrap();
        let mut readout = Readout::zeros(1, n_f);
        let mut err = [0.0];
        let mut k = 0;
        group.bench_with_input(BenchmarkId::from_parameter(n_f), &n_f, |b, _| {
            b.iter(|| {
                k = (k + 1) % xs.len();
                rls.step(&mut readout, &xs[k], &[0.5], &mut err).unwrap();
            })
        });
    }
    group.finish();
}

fn bench_spectral_radius(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_radius");
    group.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [100, 300, 500] {
        let m = random_matrix(n, &mut rng) / (n as f64).sqrt();
        group.bench_with_input(BenchmarkId::new("dense", n), &m, |b, m| {
            b.iter(|| spectral_radius(black_box(m)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("iterative", n), &m, |b, m| {
            b.iter(|| spectral_radius_iterative(black_box(m), POWER_TOL, POWER_MAX_ITER).unwrap())
        });
    }
    group.finish();
}

fn bench_ablation(c: &mut Criterion) {
    let ds = gen_synthetic_redundant(&SynthParams {
        n_sequences: 20,
        seq_len: 50,
        n_channels: 4,
        task_mode: TaskMode::LastStepClassification,
        seed: 9,
        ..SynthParams::default()
    })
    .unwrap();
    let rc = ReservoirConfig::new(4, 100, 0.5).with_seed(2);
    let dc = DropInConfig {
        max_epochs: 2,
        ..DropInConfig::default()
    };
    let model = train_standard(&ds, &ds.empty_like(), &rc, &dc, 1.0, 0.9999995).unwrap();
    let all: Vec<usize> = (0..4).collect();
    let mut group = c.benchmark_group("ablation");
    group.sample_size(10);
    group.bench_function("k_max_3_n4_nr100", |b| {
        b.iter(|| ablation_curve(&model, black_box(&ds), 3, &all).unwrap())
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_update_state,
    bench_rls_step,
    bench_spectral_radius,
    bench_ablation
);
criterion_main!(kernels);
