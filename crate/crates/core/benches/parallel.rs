//! Parallel vs sequential paths on the three hot loops: Monte Carlo
//! replications, factorization probes and the full scenario suite.
//! Build with `--no-default-features` to time the rayon-free fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multiphase::mc_engine::{run_experiment, EstimatorKind, EstimatorSpec, ExperimentConfig, Loss, XiRule};
use multiphase::model::registry::model;
use multiphase::par::Workers;
use multiphase::preprocess::{catalog, StatisticKind};
use multiphase::scenarios::{verify, ScenarioConfig};
use multiphase::sufficiency::{default_pairs, factorization_check, CheckConfig};

fn paths() -> [(&'static str, Workers); 2] {
    [("sequential", Workers::SEQUENTIAL), ("parallel", Workers::default())]
}

fn experiment(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_experiment");
    for (name, w) in paths() {
        let cfg = ExperimentConfig {
            model: "common_mean".into(),
            shard_sizes: vec![10, 10, 10],
            theta: vec![0.2],
            xi: XiRule::Uniform { low: vec![0.5], high: vec![2.0] },
            estimators: vec![
                EstimatorSpec { id: "mean".into(), statistic: StatisticKind::Identity, estimator: EstimatorKind::Mean },
                EstimatorSpec { id: "median".into(), statistic: StatisticKind::Identity, estimator: EstimatorKind::Median },
                EstimatorSpec {
                    id: "shard".into(),
                    statistic: StatisticKind::MeanSe,
                    estimator: EstimatorKind::Procedure { form: "(X̂,S)".into() },
                },
            ],
            replications: 20_000,
            seed: 1,
            loss: Loss::Squared,
            workers: w.0,
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| b.iter(|| run_experiment(cfg).unwrap()));
    }
    g.finish();
}

fn factorization(c: &mut Criterion) {
    let m = model("student_t").unwrap();
    let pairs = default_pairs(&m, 2, 3);
    let mut g = c.benchmark_group("factorization_check");
    g.sample_size(10);
    for (name, w) in paths() {
        let mut cfg = CheckConfig::new(vec![4, 4], 5);
        cfg.n_probe = 32;
        cfg.workers = w;
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| factorization_check(&m, &catalog::mean_ss(), &pairs, cfg).unwrap())
        });
    }
    g.finish();
}

fn suite(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    for (name, w) in paths() {
        let cfg = ScenarioConfig { workers: w, ..ScenarioConfig::with_seed(7) };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| b.iter(|| verify(cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, experiment, factorization, suite);
criterion_main!(benches);
