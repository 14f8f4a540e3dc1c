use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use isosim::analytics::mm1_monte_carlo;
use isosim::exec::Execution;
use isosim::experiment::run_batch;
use isosim::scenario::ScenarioConfig;

fn configs() -> Vec<ScenarioConfig> {
    (0..4)
        .map(|i| {
            let mut c = ScenarioConfig::default();
            c.set("sim.horizon", "5ms").unwrap();
            c.set("sim.warmup", "1ms").unwrap();
            c.sim.seed = i + 1;
            c
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("scenario_batch");
    g.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_batch(configs(), exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("mm1_monte_carlo");
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| mm1_monte_carlo(0.2, 1.0, 12.0, 1.0, 1_000_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
