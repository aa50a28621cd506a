use std::hint::black_box;

use cnot_core::equilibrium::first_variation;
use cnot_core::finite_games::{best_response_dynamics, build_finite_game};
use cnot_core::solvers::{best_reply_map, solve};
use cnot_core::{DiscreteMeasure, Sampling, Scenario, SolverKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn scenario(name: &str, n: usize) -> Scenario {
    Scenario::named(name).unwrap().with_grid(n).unwrap()
}

fn continuum_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for n in [64, 128] {
        let s = scenario("log_benchmark", n);
        group.bench_with_input(BenchmarkId::new("ode", n), &s, |b, s| b.iter(|| solve(black_box(s), SolverKind::Ode)));
        group.bench_with_input(BenchmarkId::new("variational", n), &s, |b, s| {
            b.iter(|| solve(black_box(s), SolverKind::Variational))
        });
    }
    let s = scenario("fig3", 16);
    group.bench_function("best_reply/fig3_16", |b| b.iter(|| solve(black_box(&s), SolverKind::BestReply)));
    group.finish();
}

fn building_blocks(c: &mut Criterion) {
    let s = scenario("fig2", 200);
    let nu = DiscreteMeasure::uniform(s.strategy_grid.clone());
    c.bench_function("first_variation/fig2_200", |b| b.iter(|| first_variation(black_box(&nu), &s.mu, &s.cost)));

    let s = scenario("fig3", 24);
    let nu = DiscreteMeasure::uniform(s.strategy_grid.clone());
    c.bench_function("best_reply_map/fig3_24", |b| b.iter(|| best_reply_map(black_box(&nu), &s.type_grid, &s.cost)));
}

fn finite_games(c: &mut Criterion) {
    let s = scenario("fig3", 16);
    let mut group = c.benchmark_group("best_response_dynamics");
    group.sample_size(10);
    for n in [50, 200] {
        let game = build_finite_game(&s, n, Sampling::Iid { seed: 1 }).unwrap();
        let start = vec![0; n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| best_response_dynamics(black_box(&game), &start, 10_000))
        });
    }
    group.finish();
}

criterion_group!(benches, continuum_solvers, building_blocks, finite_games);
criterion_main!(benches);
