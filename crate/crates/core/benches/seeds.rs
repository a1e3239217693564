//! Multi-seed fits run sequentially versus on the rayon pool.
//!
//! Without the `parallel` feature both variants run sequentially.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rpia_core::config::{ExperimentConfig, LambdaMode};
use rpia_core::exec::Execution;
use rpia_core::experiment::run_experiment;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

fn curve() -> ExperimentConfig {
    config(
        r#"
        problem = "curve"
        generator = "rose"
        m = 1000
        n1 = 100
        noise_amplitude = 10.0
        tolerance = 0.0
        max_iterations = 4000
        seeds = [0, 1, 2, 3, 4, 5, 6, 7]
        lambda = { mode = "fixed", value = 1.646e-6 }
        "#,
    )
}

fn surface() -> ExperimentConfig {
    config(
        r#"
        problem = "surface"
        generator = "boy"
        m = 60
        n1 = 20
        noise_amplitude = 40.0
        tolerance = 0.0
        max_iterations = 2000
        seeds = [0, 1, 2, 3]
        lambda = { mode = "fixed", value = 4.48e-6 }
        "#,
    )
}

fn sweep() -> ExperimentConfig {
    let mut c = curve();
    c.max_iterations = Some(1000);
    c.seeds = Some((0..4).collect());
    c.lambda = LambdaMode::Sweep {
        min: 1e-9,
        max: 1e-3,
        points: 7,
    };
    c
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("seeds");
    group.sample_size(10).measurement_time(Duration::from_secs(5));
    for (name, cfg) in [("curve", curve()), ("surface", surface()), ("sweep", sweep())] {
        for (mode, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, mode), &exec, |b, exec| {
                b.iter(|| run_experiment(&cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
