//! Sequential vs rayon-dispatched trial throughput on a small link sweep.
//!
//! Run with `cargo bench --bench sweep_throughput`; the parallel case needs
//! the default `parallel` feature.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hybridsim::harness::{
    run_scenario_with_mode, ExecMode, LinkScenario, ScenarioConfig, ScenarioKind, Scheme,
    TranscriptVerbosity,
};

fn bench_config(trials: usize) -> ScenarioConfig {
    ScenarioConfig {
        label: "bench".into(),
        kind: ScenarioKind::Link(LinkScenario {
            bs_antennas: 32,
            ms_antennas: 16,
            rf_chains: 4,
            streams: 2,
            paths: 3,
            depth: 4,
            mtqr_iterations: None,
        }),
        schemes: vec![Scheme::Sed, Scheme::Mtqr, Scheme::Opt],
        snr_db: vec![0.0, 10.0],
        trials,
        seed: 42,
        emit_waterfill: false,
        transcripts: TranscriptVerbosity::Off,
    }
}

fn sweep_throughput(c: &mut Criterion) {
    let mut group = c.benchmark_group("link_sweep");
    group.sample_size(10);
    for &trials in &[8usize, 32] {
        let cfg = bench_config(trials);
        group.bench_with_input(
            BenchmarkId::new("sequential", trials),
            &cfg,
            |b, cfg| b.iter(|| run_scenario_with_mode(cfg, ExecMode::Sequential).unwrap()),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", trials), &cfg, |b, cfg| {
            b.iter(|| run_scenario_with_mode(cfg, ExecMode::Parallel).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep_throughput);
criterion_main!(benches);
