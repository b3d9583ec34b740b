//! Parallel vs sequential batch execution on a small simulation workload.
//!
//! Run with `cargo bench -p sfplane`. The two benchmarks execute the same
//! batch; the parallel one fans the repetitions out over the rayon pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sfplane::harness::{run_batch, run_batch_serial, SimulationConfig};

fn bench_config() -> SimulationConfig {
    let mut config = SimulationConfig::new(1);
    config.repetitions = 8;
    config.optimizer.max_iterations = 12;
    config
}

fn batch_benches(c: &mut Criterion) {
    let config = bench_config();
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| run_batch(black_box(&config)).unwrap())
    });
    group.bench_function("serial", |b| {
        b.iter(|| run_batch_serial(black_box(&config)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, batch_benches);
criterion_main!(benches);
