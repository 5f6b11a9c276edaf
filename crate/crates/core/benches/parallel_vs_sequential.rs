// SPDX-License-Identifier: MIT OR Apache-2.0
//! Parallel against sequential execution of the hot paths.
//!
//! Without the `parallel` feature both variants run the sequential code.

use annulus_rotor::eulersim::{SimState, Simulator};
use annulus_rotor::kernel;
use annulus_rotor::linop::{BandSetup, ZGrid};
use annulus_rotor::nonlinear::{build_vorticity, LevelSetPerturbation};
use annulus_rotor::poisson::{PoissonSolver, RadialGrid};
use annulus_rotor::{AnnulusConfig, Exec, Profile};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const STRATEGIES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn fixture() -> (Profile, BandSetup) {
    let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, 0.1).unwrap();
    let profile = Profile::new(cfg, 1e-2, 0.1).unwrap();
    let setup = BandSetup::new(&profile, ZGrid::new(64));
    (profile, setup)
}

fn poisson(c: &mut Criterion) {
    let (profile, _) = fixture();
    let grid = RadialGrid::with_band_margin(&profile.cfg, profile.eps, profile.eps, &[32, 64, 32, 64, 32]).unwrap();
    let mut group = c.benchmark_group("solve_full");
    for (name, exec) in STRATEGIES {
        let solver = PoissonSolver::new(grid.clone(), 128, exec).unwrap();
        let omega: Vec<f64> = (0..grid.len() * 128).map(|k| ((k % 977) as f64 * 1e-3).sin()).collect();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solver.solve_full(black_box(&omega), profile.cfg.circulation(), exec).unwrap())
        });
    }
    group.finish();
}

fn vorticity(c: &mut Criterion) {
    let (profile, setup) = fixture();
    let eig = kernel::construct(&setup, 1).unwrap();
    let f = LevelSetPerturbation::from_eigen(&setup, &eig, 1e-3).unwrap();
    let grid = RadialGrid::with_band_margin(&profile.cfg, profile.eps, profile.eps, &[32, 64, 32, 64, 32]).unwrap();
    let mut group = c.benchmark_group("build_vorticity");
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_vorticity(black_box(&f), &profile, &grid, 64, exec).unwrap())
        });
    }
    group.finish();
}

fn mode_scan(c: &mut Criterion) {
    let (_, setup) = fixture();
    let eig = kernel::construct(&setup, 1).unwrap();
    let mut group = c.benchmark_group("validate_kernel");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| kernel::validate_kernel(&setup, black_box(&eig), 8, exec)));
    }
    group.finish();
}

fn rk4_step(c: &mut Criterion) {
    let (profile, _) = fixture();
    let mut group = c.benchmark_group("rk4_step");
    group.sample_size(20);
    for (name, exec) in STRATEGIES {
        let sim = Simulator::for_profile(&profile, 192, 128, exec).unwrap();
        let omega: Vec<f64> = sim
            .grid()
            .nodes
            .iter()
            .flat_map(|&r| {
                let base = profile.varpi_unchecked(r);
                (0..128).map(move |j| base + 1e-3 * (j as f64).cos())
            })
            .collect();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut state = SimState { omega: omega.clone(), time: 0.0 };
                sim.step(&mut state, 0.05).unwrap();
                state
            })
        });
    }
    group.finish();
}

criterion_group!(benches, poisson, vorticity, mode_scan, rk4_step);
criterion_main!(benches);
