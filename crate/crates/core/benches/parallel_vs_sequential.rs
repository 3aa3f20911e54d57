//! Run with `cargo bench -p factsim-core` for the rayon path and with
//! `--no-default-features` for the sequential one. Each group also pins a
//! one-thread pool so both schedules show up in a single report.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use factsim_core::equilibrium::fact_best_response;
use factsim_core::fedsim::{run_pfl_training, FedConfig, SyntheticTask};
use factsim_core::loss::{lambda_for, AgentPoint};
use factsim_core::mechanism::{synthetic_wins, Sampling};
use factsim_core::{AgentProfile, CostDistribution};

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let all = std::thread::available_parallelism().map_or(4, |n| n.get());
    [1, all]
        .into_iter()
        .map(|t| {
            (
                t,
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .unwrap(),
            )
        })
        .collect()
}

fn monte_carlo(c: &mut Criterion) {
    let dist = CostDistribution::gaussian_around(1.024e-7, 0.1).unwrap();
    let mut g = c.benchmark_group("synthetic_wins_20k");
    for (threads, pool) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, _| {
            b.iter(|| {
                pool.install(|| {
                    synthetic_wins(1.05e-7, &dist, 20_000, 1, 0, Sampling::PerTrial).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn grid_oracle(c: &mut Criterion) {
    let (cost, k, sum) = (1.024e-7, 2.0, 46875.0);
    let base = AgentPoint::truthful(3125.0, cost, lambda_for(cost, sum, k, 1.0).unwrap(), sum);
    let dist = CostDistribution::gaussian_around(cost, 0.1).unwrap();
    let mut g = c.benchmark_group("fact_best_response");
    for (threads, pool) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, _| {
            b.iter(|| {
                pool.install(|| {
                    fact_best_response(
                        base,
                        k,
                        16,
                        &dist,
                        2.25e-3,
                        (1562.5, 4687.5),
                        (0.5 * cost, 1.5 * cost),
                    )
                    .unwrap()
                })
            })
        });
    }
    g.finish();
}

fn fedavg(c: &mut Criterion) {
    let task = SyntheticTask::new(64, 0.1, 1.0, 40.0).unwrap();
    let agents: Vec<_> = (0..16)
        .map(|_| AgentProfile::truthful(1.024e-7, 3125.0).unwrap())
        .collect();
    let cfg = FedConfig {
        rounds: 50,
        local_steps: 6,
        epochs: 1,
        batches_per_epoch: None,
        step_size: 0.05,
        seed: 3,
    };
    let mut g = c.benchmark_group("fedavg_16x50x6");
    for (threads, pool) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, _| {
            b.iter(|| pool.install(|| run_pfl_training(&agents, &task, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, grid_oracle, fedavg);
criterion_main!(benches);
