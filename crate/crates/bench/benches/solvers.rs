use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pdmp_core::bounds::solve_bounds;
use pdmp_core::catalog;
use pdmp_core::cdf_solver::{solve_cdf, solve_expected, solve_min_cost, SolveOptions};
use pdmp_core::control::{solve_threshold, ThresholdOptions};
use pdmp_core::simulate::Simulator;
use pdmp_core::{build_grid, TauPolicy};

fn cdf(c: &mut Criterion) {
    let spec = catalog::example1();
    let g = build_grid(&spec, 1e-3, 1e-3, 1.0).unwrap();
    let opts = SolveOptions::default();
    c.bench_function("example1 cdf 1e-3", |b| b.iter(|| solve_cdf(&spec, &g, &opts, None).unwrap()));
    c.bench_function("example1 min cost 1e-3", |b| b.iter(|| solve_min_cost(&spec, &g).unwrap()));
    c.bench_function("example1 expected 1e-3", |b| b.iter(|| solve_expected(&spec, &g, 1e-10, 100_000).unwrap()));

    let spec3 = catalog::example3();
    let g3 = build_grid(&spec3, 0.01, 0.01, 1.0).unwrap();
    c.bench_function("example3 cdf 1e-2", |b| b.iter(|| solve_cdf(&spec3, &g3, &opts, None).unwrap()));

    let spec4 = catalog::example4();
    let g4 = build_grid(&spec4, 2e-3, 2e-3, 1.0).unwrap();
    c.bench_function("example4 bounds 2e-3", |b| b.iter(|| solve_bounds(&spec4, &g4, &opts, None).unwrap()));
}

fn control(c: &mut Criterion) {
    let mut group = c.benchmark_group("control");
    group.sample_size(10);
    let spec5 = catalog::example5();
    let g5 = build_grid(&spec5, 2e-3, 1e-3, 1.0).unwrap();
    let opts = ThresholdOptions::default();
    group.bench_function("example5 threshold 2e-3", |b| b.iter(|| solve_threshold(&spec5, &g5, &opts).unwrap()));

    let spec6 = catalog::example6(16);
    let g6 = build_grid(&spec6, 0.02, 0.02, 0.5).unwrap();
    let opts6 = ThresholdOptions { solve: SolveOptions::with_policy(TauPolicy::BoundaryCapped), ..Default::default() };
    group.bench_function("example6 threshold 2e-2", |b| b.iter(|| solve_threshold(&spec6, &g6, &opts6).unwrap()));
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = catalog::example1();
    let sim = Simulator::new(&spec, 1).unwrap();
    c.bench_function("example1 10k trajectories", |b| b.iter(|| black_box(sim.run(&[0.3], 0, 10_000))));
}

criterion_group!(benches, cdf, control, monte_carlo);
criterion_main!(benches);
