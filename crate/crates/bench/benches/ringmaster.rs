use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringmaster_core::experiment::ExperimentConfig;
use ringmaster_core::lmo::{lmo_spectral_exact, lmo_spectral_ns, NsSchedule, DEFAULT_NS_ITERATIONS};
use ringmaster_core::timebounds::{recursion_sqrt_universal, t_universal, RateFunction};
use ringmaster_core::RateFunctions;

fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

fn spectral_lmo(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_lmo");
    for n in [16, 64, 128] {
        let y = random_matrix(n, n as u64);
        group.bench_with_input(BenchmarkId::new("exact_svd", n), &y, |b, y| {
            b.iter(|| lmo_spectral_exact(black_box(y)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("newton_schulz", n), &y, |b, y| {
            b.iter(|| lmo_spectral_ns(black_box(y), DEFAULT_NS_ITERATIONS, NsSchedule::Minimax).unwrap())
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    for (profile, threshold) in [("similar", 1), ("linear", 8)] {
        let text = format!(
            r#"
[momentum]
kind = "muon_ema"
beta = 0.95
nesterov = true
[schedule]
eta = 0.04
threshold = {threshold}
[profile]
kind = "{profile}"
n = 8
[stop]
horizon_s = 200.0
"#
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        group.bench_function(format!("quadratic_d64_{profile}_R{threshold}"), |b| {
            b.iter(|| cfg.run_single().unwrap().summary.arrivals)
        });
    }
    group.finish();
}

fn universal_bounds(c: &mut Criterion) {
    let workers = (1..=16)
        .map(|i| RateFunction::new(vec![(0.0, 1.0 / i as f64), (100.0, 0.5 / i as f64)]).unwrap())
        .collect();
    let rf = RateFunctions::new(workers).unwrap();
    c.bench_function("t_universal_R32_n16", |b| b.iter(|| t_universal(black_box(32), 10.0, &rf).unwrap()));
    c.bench_function("recursion_sqrt_K10000_n16", |b| {
        b.iter(|| recursion_sqrt_universal(black_box(10_000), &rf).unwrap())
    });
}

criterion_group!(benches, spectral_lmo, simulation, universal_bounds);
criterion_main!(benches);
