//! Benchmarks for the hot paths: the psi/Stieltjes evaluations feeding every
//! critical value, the critical-value minimization itself, and one simulation
//! replication at table scale.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use spiketest_core::asymptotics::{AsymptoticSummary, SpikedModel};
use spiketest_core::factor::{q_star, run_test, sigma_star2, FactorTestConfig};
use spiketest_core::measure::{psi_family, solve_silverstein, underline_s_at_spike, DiscreteMeasure};
use spiketest_core::simulate::{sample_spectrum, EntryDistribution, PopulationSpec};

fn bench_psi(c: &mut Criterion) {
    let h = DiscreteMeasure::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap();
    c.bench_function("psi_family", |b| {
        b.iter(|| psi_family(black_box(&h), black_box(0.5), black_box(9.0)).unwrap())
    });
    c.bench_function("underline_s_at_spike", |b| {
        b.iter(|| underline_s_at_spike(black_box(&h), black_box(0.5), black_box(9.0)).unwrap())
    });
    let z = psi_family(&h, 0.5, 9.0).unwrap().psi;
    c.bench_function("solve_silverstein", |b| {
        b.iter(|| solve_silverstein(black_box(&h), black_box(0.5), black_box(z)).unwrap())
    });
}

fn bench_critical_value(c: &mut Criterion) {
    c.bench_function("sigma_star2", |b| {
        b.iter(|| sigma_star2(black_box(&[10.0, 5.0]), 0.5, 100, 200, 2).unwrap())
    });
    c.bench_function("q_star", |b| {
        b.iter(|| q_star(black_box(&[10.0]), 5.0, 0.5, 100, 200, 0.05).unwrap())
    });
}

fn bench_summary(c: &mut Criterion) {
    let model = SpikedModel::factor(&[10.0, 5.0], 2.0, 0.5, 3.0, 200, 100).unwrap();
    c.bench_function("asymptotic_summary", |b| {
        b.iter(|| AsymptoticSummary::compute(black_box(&model)).unwrap())
    });
}

fn bench_simulation(c: &mut Criterion) {
    let spec = PopulationSpec::factor(&[10.0, 5.0], 2.0);
    let mut group = c.benchmark_group("simulation");
    group.sample_size(20);
    group.bench_function("sample_spectrum_100x200", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            sample_spectrum(black_box(&spec), 100, 200, EntryDistribution::Gaussian, seed).unwrap()
        })
    });
    group.finish();

    let sample = sample_spectrum(&spec, 100, 200, EntryDistribution::Gaussian, 11).unwrap();
    let config = FactorTestConfig { m0: 2, c: 5.0, alpha_level: 0.05, p: 100, n: 200 };
    c.bench_function("run_test_p100", |b| {
        b.iter(|| run_test(black_box(&sample.eigs), black_box(&config), true).unwrap())
    });
}

criterion_group!(benches, bench_psi, bench_critical_value, bench_summary, bench_simulation);
criterion_main!(benches);
