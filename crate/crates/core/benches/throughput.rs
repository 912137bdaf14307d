use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use uplink_sched::experiment::{oracle_check, run_compare, CompareSpec, OracleCheckConfig};
use uplink_sched::simulator::ArrivalPattern;
use uplink_sched::{schedule_interval, Event, Execution, IntervalContext, PolicyId, SemanticPriority};

fn synthetic_events(n: usize, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            Event::new(
                format!("e{i:06}"),
                0.0,
                SemanticPriority::new(rng.random_range(0.01..=1.0)),
                rng.random_range(500..=8_000),
                rng.random_range(10_000..=120_000),
                rng.random_range(20_000..=200_000),
            )
            .unwrap()
        })
        .collect()
}

fn interval_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("schedule_interval");
    for n in [1_000usize, 10_000, 100_000, 200_000] {
        let events = synthetic_events(n, 42);
        let bandwidth = events.iter().map(|e| e.c_json).sum::<u64>() / 2;
        group.bench_with_input(BenchmarkId::from_parameter(n), &events, |b, events| {
            b.iter_batched(
                || IntervalContext::new(bandwidth, 1.0, 1.5, events.iter().collect(), vec![]).unwrap(),
                |ctx| black_box(schedule_interval(&ctx)),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn compare_matrix(c: &mut Criterion) {
    let spec = CompareSpec {
        policies: PolicyId::ALL.to_vec(),
        patterns: ArrivalPattern::ALL.to_vec(),
        scales: vec![1.0, 0.5, 0.25],
        seeds: vec![1, 2],
        duration_s: 120.0,
        ..Default::default()
    };
    let mut group = c.benchmark_group("compare_matrix");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}").to_lowercase(), |b| b.iter(|| black_box(run_compare(&spec, exec).unwrap())));
    }
    group.finish();
}

fn oracle_trials(c: &mut Criterion) {
    let cfg = OracleCheckConfig { n: 4, trials: 200, seed: 1, ..Default::default() };
    let mut group = c.benchmark_group("oracle_check");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}").to_lowercase(), |b| b.iter(|| black_box(oracle_check(&cfg, exec).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, interval_scaling, compare_matrix, oracle_trials);
criterion_main!(benches);
