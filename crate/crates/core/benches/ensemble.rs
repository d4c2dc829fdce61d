use std::hint::black_box;

use beamtrack::acceptance::reference_scenario;
use beamtrack::admm::AdmmConfig;
use beamtrack::exec::Execution;
use beamtrack::harness::{run_ensemble, ExperimentConfig};
use beamtrack::tracks::TrackConfig;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn config(execution: Execution) -> ExperimentConfig {
    ExperimentConfig {
        scenario: reference_scenario(),
        track: TrackConfig {
            length: 10,
            seed: 1,
            ..TrackConfig::default()
        },
        rhos: vec![50.0],
        tracks: 8,
        admm: AdmmConfig {
            execution,
            ..AdmmConfig::default()
        },
        execution,
        out_dir: None,
    }
}

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble_8x10");
    group.sample_size(10);
    for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        let cfg = config(execution);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_ensemble(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
