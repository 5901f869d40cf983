use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use qlqg::scenario::default_scenario;
use qlqg::simulator::{continuum_study, Simulator};
use qlqg::Execution;

fn monte_carlo(c: &mut Criterion) {
    let sc = default_scenario();
    let (m, meas, cost) = sc.discretize().unwrap();
    let sim = Simulator::new(m, meas, cost, sc.init).unwrap();
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for n in [1_000usize, 10_000] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, &n| {
                b.iter(|| sim.monte_carlo(black_box(n), 42, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn continuum(c: &mut Criterion) {
    let sc = default_scenario();
    let dts = [0.04, 0.02, 0.01, 0.005, 0.0025];
    let mut group = c.benchmark_group("continuum");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| continuum_study(&sc.continuous, black_box(&dts), &sc.init, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, continuum);
criterion_main!(benches);
