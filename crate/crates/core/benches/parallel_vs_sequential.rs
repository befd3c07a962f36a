use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fairlens::correct_post::{mixing_oracle_with, MixingOptions};
use fairlens::data::synthetic::{generate_synthetic, generate_synthetic_with, GroupSpec, SyntheticSpec};
use fairlens::feasibility::impossibility_trials;
use fairlens::frontier::frontier;
use fairlens::{ConfusionTable, Execution};

fn strategies() -> Vec<(&'static str, Execution)> {
    let mut s = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    s.push(("parallel", Execution::Parallel));
    s
}

fn spec() -> SyntheticSpec {
    SyntheticSpec::new(
        9,
        vec![
            GroupSpec::new("black", 13_396, 0.11, 1.2),
            GroupSpec::new("white", 6_604, 0.06, 0.8),
            GroupSpec::new("other", 5_000, 0.09, 1.0),
        ],
    )
}

fn bench_oracle(c: &mut Criterion) {
    let tables = BTreeMap::from([
        ("a".to_string(), ConfusionTable::new(300.0, 200.0, 200.0, 300.0).unwrap()),
        ("b".to_string(), ConfusionTable::new(720.0, 280.0, 150.0, 350.0).unwrap()),
    ]);
    let options = MixingOptions::new(0.0);
    let mut group = c.benchmark_group("grid_oracle_step_0.002");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mixing_oracle_with(black_box(&tables), 0.002, &options, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_generation(c: &mut Criterion) {
    let spec = spec();
    let mut group = c.benchmark_group("synthetic_25k_records");
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_synthetic_with(black_box(&spec), exec).unwrap())
        });
    }
    group.finish();
}

fn bench_frontier(c: &mut Criterion) {
    let data = generate_synthetic(&spec()).unwrap();
    let mut group = c.benchmark_group("frontier_grid_101");
    group.sample_size(20);
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| frontier(black_box(&data), "black", 101, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_impossibility(c: &mut Criterion) {
    let mut group = c.benchmark_group("impossibility_1000_trials");
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| impossibility_trials(1000, black_box(7), 0.05, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_oracle, bench_generation, bench_frontier, bench_impossibility);
criterion_main!(benches);
