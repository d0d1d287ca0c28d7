use std::hint::black_box;

use contact_hj::{
    fd_evolve, flow, ContactState, Direction, EvolveMode, Family, FdConfig, Scheme, Solver,
};
use contact_hj_bench::{smooth_data, system};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn dp_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_step");
    let sys = system(Family::Discounted);
    for n in [100, 200, 400] {
        let phi = smooth_data(1, n);
        let solver = Solver::new(&sys, *phi.grid(), Scheme::new(1e-3)).unwrap();
        group.bench_with_input(BenchmarkId::new("1d", n), &phi, |b, phi| {
            b.iter(|| solver.dp_step(black_box(phi), Direction::Backward).unwrap())
        });
    }
    let sys2 = contact_hj::BuiltinSystem::new(Family::Discounted, &contact_hj::FamilyParams::default().with_dim(2)).unwrap();
    let phi = smooth_data(2, 32);
    let solver = Solver::new(&sys2, *phi.grid(), Scheme::new(2e-3)).unwrap();
    group.bench_function("2d/32", |b| b.iter(|| solver.dp_step(black_box(&phi), Direction::Backward).unwrap()));
    group.finish();
}

fn evolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    let sys = system(Family::Discounted);
    let phi = smooth_data(1, 200);
    let solver = Solver::new(&sys, *phi.grid(), Scheme::new(1e-3)).unwrap();
    for mode in [EvolveMode::Direct, EvolveMode::Picard] {
        group.bench_function(format!("{mode:?}/T=0.1"), |b| {
            b.iter(|| solver.backward_evolve(black_box(&phi), 0.1, mode).unwrap())
        });
    }
    group.bench_function("forward_action/T=0.1", |b| {
        b.iter(|| solver.forward_action(black_box(&[0.3, 0.0]), 0.0, 0.1).unwrap())
    });
    group.finish();
}

fn oracle_and_flow(c: &mut Criterion) {
    let sys = system(Family::Mechanical);
    let phi = smooth_data(1, 200);
    c.bench_function("fd_evolve/T=0.1", |b| {
        b.iter(|| fd_evolve(&sys, black_box(&phi), 0.1, 0.0, 1e-3, &FdConfig::default()).unwrap())
    });
    let s0 = ContactState::new([0.1, 0.0], 0.0, [0.7, 0.0]);
    c.bench_function("flow/T=1", |b| b.iter(|| flow(&sys, black_box(&s0), 1.0, 1e-3).unwrap()));
}

criterion_group!(benches, dp_step, evolve, oracle_and_flow);
criterion_main!(benches);
