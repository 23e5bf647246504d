use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use wta_bench::{episode, instance, network, observation};
use wta_core::engagement::{run_episode, EngagementOptions};
use wta_core::solvers::{lowest_heading_error, solve_bnb, solve_greedy_local, solve_heuristic};

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    for (m, n) in [(8, 5), (20, 12)] {
        let inst = instance(&episode(m, n));
        let size = format!("{m}x{n}");
        group.bench_with_input(BenchmarkId::new("heuristic", &size), &inst, |b, i| b.iter(|| solve_heuristic(black_box(i))));
        group.bench_with_input(BenchmarkId::new("fallback", &size), &inst, |b, i| b.iter(|| lowest_heading_error(black_box(i))));
        group.bench_with_input(BenchmarkId::new("greedy_local", &size), &inst, |b, i| b.iter(|| solve_greedy_local(black_box(i))));
        group.bench_with_input(BenchmarkId::new("bnb_20k_nodes", &size), &inst, |b, i| b.iter(|| solve_bnb(black_box(i), 20_000)));
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("policy_forward");
    for (m, n) in [(20, 12), (40, 24)] {
        let net = network(m, n);
        let obs = observation(&episode(m, n), net.arch());
        group.bench_function(format!("{m}x{n}"), |b| b.iter(|| net.policy_forward(black_box(&obs)).unwrap().greedy(m)));
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    for (m, n) in [(8, 5), (20, 12)] {
        let init = episode(m, n);
        let a = solve_heuristic(&instance(&init));
        let opts = EngagementOptions::default();
        group.bench_function(format!("{m}x{n}"), |b| b.iter(|| run_episode(black_box(&init), &a, &opts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, solvers, forward, simulation);
criterion_main!(benches);
