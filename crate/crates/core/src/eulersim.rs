// SPDX-License-Identifier: MIT OR Apache-2.0
//! Explicit RK4 integration of `∂ₜω + u_r ∂_r ω + (u_θ/r) ∂_θ ω = 0` on the annulus.
//!
//! The stream function is re-solved at every stage with the circulation fixed to its
//! initial value. Radial derivatives of ω use 5-point Fornberg stencils on the grid
//! nodes (centered in the interior, one-sided at the walls); angular derivatives are
//! spectral.

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::poisson::{PoissonSolver, RadialGrid, StreamField};
use crate::profile::Profile;
use crate::quad::fornberg_weights;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Vorticity samples `ω[i * n_theta + j]` at a given time.
#[derive(Clone, Debug)]
pub struct SimState {
    pub omega: Vec<f64>,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conserved {
    pub circulation: f64,
    pub mean_vorticity: f64,
    pub energy: f64,
}

pub struct Simulator {
    pub solver: PoissonSolver,
    pub gamma: f64,
    pub exec: Exec,
    stencils: Vec<(usize, [f64; 5])>,
    spacing: Vec<f64>,
}

/// Node counts per panel for a simulation with about `nr` radial nodes:
/// `nr/6` on each outer panel and `nr/4` on each band panel, rounded to multiples of 16.
pub fn panel_counts(nr: usize) -> [usize; 5] {
    let round = |v: usize| ((v + 8) / 16).max(1) * 16;
    let (o, b) = (round(nr / 6), round(nr / 4));
    [o, b, o, b, o]
}

impl Simulator {
    pub fn new(grid: RadialGrid, n_theta: usize, gamma: f64, exec: Exec) -> Result<Simulator> {
        let nr = grid.len();
        if nr < 5 {
            return Err(Error::Config("at least 5 radial nodes are required".into()));
        }
        let stencils = (0..nr)
            .map(|i| {
                let start = i.saturating_sub(2).min(nr - 5);
                let w = fornberg_weights(grid.nodes[i], &grid.nodes[start..start + 5], 1);
                (start, [w[1][0], w[1][1], w[1][2], w[1][3], w[1][4]])
            })
            .collect();
        let spacing = (0..nr)
            .map(|i| {
                let left = if i > 0 { grid.nodes[i] - grid.nodes[i - 1] } else { f64::INFINITY };
                let right = if i + 1 < nr { grid.nodes[i + 1] - grid.nodes[i] } else { f64::INFINITY };
                left.min(right)
            })
            .collect();
        let solver = PoissonSolver::new(grid, n_theta, exec)?;
        Ok(Simulator { solver, gamma, exec, stencils, spacing })
    }

    /// Grid with band panels widened by `ε` on each side, split by [`panel_counts`].
    pub fn for_profile(profile: &Profile, nr: usize, n_theta: usize, exec: Exec) -> Result<Simulator> {
        let grid = RadialGrid::with_band_margin(&profile.cfg, profile.eps, profile.eps, &panel_counts(nr))?;
        Simulator::new(grid, n_theta, profile.cfg.circulation(), exec)
    }

    pub fn n_theta(&self) -> usize {
        self.solver.n_theta
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.solver.grid
    }

    fn d_r(&self, field: &[f64]) -> Vec<f64> {
        let nt = self.n_theta();
        let nr = self.grid().len();
        let mut out = vec![0.0; nr * nt];
        par::for_each_chunk_mut(self.exec, &mut out, nt, |i, row| {
            let (start, w) = &self.stencils[i];
            for (j, o) in row.iter_mut().enumerate() {
                *o = (0..5).map(|q| w[q] * field[(start + q) * nt + j]).sum();
            }
        });
        out
    }

    fn velocity(&self, stream: &StreamField) -> (Vec<f64>, Vec<f64>) {
        let nt = self.n_theta();
        let nr = self.grid().len();
        let mut ur = vec![0.0; nr * nt];
        let mut ut = vec![0.0; nr * nt];
        for i in 0..nr {
            let r = self.grid().nodes[i];
            let wall = i == 0 || i == nr - 1;
            for j in 0..nt {
                let q = i * nt + j;
                ur[q] = if wall { 0.0 } else { stream.dpsi_dtheta[q] / r };
                ut[q] = -stream.dpsi_dr[q];
            }
        }
        (ur, ut)
    }

    /// Right-hand side `-u_r ∂_r ω - (u_θ/r) ∂_θ ω` and the velocity it used.
    pub fn rhs(&self, omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let stream = self.solver.solve_full(omega, self.gamma, self.exec)?;
        let (ur, ut) = self.velocity(&stream);
        let wr = self.d_r(omega);
        let wt = self.solver.d_theta(omega, self.exec);
        let nt = self.n_theta();
        let nodes = &self.grid().nodes;
        let out = (0..omega.len()).map(|q| -ur[q] * wr[q] - ut[q] / nodes[q / nt] * wt[q]).collect();
        Ok((out, ur, ut))
    }

    /// `0.5 min(Δr/|u_r|, rΔθ/|u_θ|)` for the given velocity.
    pub fn max_stable_dt(&self, ur: &[f64], ut: &[f64]) -> f64 {
        let nt = self.n_theta();
        let dth = 2.0 * PI / nt as f64;
        let mut dt = f64::INFINITY;
        for q in 0..ur.len() {
            let i = q / nt;
            let r = self.grid().nodes[i];
            if ur[q] != 0.0 {
                dt = dt.min(self.spacing[i] / ur[q].abs());
            }
            if ut[q] != 0.0 {
                dt = dt.min(r * dth / ut[q].abs());
            }
        }
        0.5 * dt
    }

    /// One classical RK4 step.
    pub fn step(&self, state: &mut SimState, dt: f64) -> Result<()> {
        let w0 = &state.omega;
        let (k1, ur, ut) = self.rhs(w0)?;
        let limit = self.max_stable_dt(&ur, &ut);
        if dt > limit {
            return Err(Error::Validation(format!("CFL violated: dt = {dt:.4e} exceeds {limit:.4e}; use dt <= {limit:.4e}")));
        }
        let axpy = |a: f64, k: &[f64]| w0.iter().zip(k).map(|(w, k)| w + a * k).collect::<Vec<f64>>();
        let (k2, _, _) = self.rhs(&axpy(0.5 * dt, &k1))?;
        let (k3, _, _) = self.rhs(&axpy(0.5 * dt, &k2))?;
        let (k4, _, _) = self.rhs(&axpy(dt, &k3))?;
        for q in 0..state.omega.len() {
            state.omega[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
        }
        state.time += dt;
        Ok(())
    }

    /// `∫ g dA` for a tensor-grid field.
    pub fn area_integral(&self, field: &[f64]) -> f64 {
        let nt = self.n_theta();
        let dth = 2.0 * PI / nt as f64;
        let grid = self.grid();
        let rows: Vec<f64> = (0..grid.len()).map(|i| grid.nodes[i] * field[i * nt..(i + 1) * nt].iter().sum::<f64>() * dth).collect();
        grid.integrate(&rows)
    }

    /// Area-weighted L² norm.
    pub fn norm(&self, field: &[f64]) -> f64 {
        self.area_integral(&field.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt()
    }

    /// Circulation `-(1/2π)∬ u_θ dr dθ`, mean vorticity and kinetic energy.
    pub fn conserved(&self, state: &SimState) -> Result<Conserved> {
        let stream = self.solver.solve_full(&state.omega, self.gamma, self.exec)?;
        let (ur, ut) = self.velocity(&stream);
        let nt = self.n_theta();
        let grid = self.grid();
        let dth = 2.0 * PI / nt as f64;
        let rows: Vec<f64> = (0..grid.len()).map(|i| -ut[i * nt..(i + 1) * nt].iter().sum::<f64>() * dth).collect();
        let circulation = grid.integrate(&rows) / (2.0 * PI);
        let area = PI * (grid.r_max().powi(2) - grid.r_min().powi(2));
        let mean_vorticity = self.area_integral(&state.omega) / area;
        let ke: Vec<f64> = ur.iter().zip(&ut).map(|(a, b)| 0.5 * (a * a + b * b)).collect();
        Ok(Conserved { circulation, mean_vorticity, energy: self.area_integral(&ke) })
    }

    /// `ω(r, θ - shift)` by exact spectral translation.
    pub fn rotate(&self, field: &[f64], shift: f64) -> Vec<f64> {
        let nt = self.n_theta();
        let mut spec = self.solver.spectrum(field, self.exec);
        for row in spec.chunks_mut(nt) {
            for (k, c) in row.iter_mut().enumerate() {
                let n = if k < nt / 2 { k as f64 } else if k == nt / 2 { 0.0 } else { k as f64 - nt as f64 };
                *c *= Complex64::from_polar(1.0, -n * shift);
                if k == nt / 2 {
                    *c = Complex64::new(c.re * (nt as f64 / 2.0 * shift).cos(), 0.0);
                }
            }
        }
        let mut fft = rustfft::FftPlanner::new();
        let inv = fft.plan_fft_inverse(nt);
        for row in spec.chunks_mut(nt) {
            inv.process(row);
        }
        spec.into_iter().map(|c| c.re).collect()
    }

    /// `Σ_i w_i r_i ω̂_m(r_i)` weighted correlation of mode `m` between two fields.
    fn mode_correlation(&self, a: &[f64], b: &[f64], m: usize) -> Complex64 {
        let nt = self.n_theta();
        let sa = self.solver.spectrum(a, self.exec);
        let sb = self.solver.spectrum(b, self.exec);
        let grid = self.grid();
        (0..grid.len())
            .map(|i| sa[i * nt + m] * sb[i * nt + m].conj() * grid.weights[i] * grid.nodes[i])
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub t: f64,
    /// Rotation rate fitted on all checkpoints up to this one.
    pub lambda_meas: f64,
    /// `‖ω(t) - ω(0)(·, θ - λ t)‖ / ‖ω(0)‖` with λ the expected rate.
    pub return_error: f64,
    pub conserved: Conserved,
}

#[derive(Clone, Debug)]
pub struct RotationReport {
    pub lambda_expected: f64,
    pub lambda_meas: f64,
    pub period: f64,
    pub steps: usize,
    pub dt: f64,
    /// `‖ω(T) - ω(0)‖ / ‖ω(0)‖`.
    pub return_error: f64,
    /// `‖ω(T) - ω(0)‖ / ‖ω(0) - ω̄(0)‖` with `ω̄` the angular mean.
    pub return_error_perturbation: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub initial: Conserved,
    pub fin: Conserved,
}

impl RotationReport {
    pub fn circulation_drift(&self) -> f64 {
        self.checkpoints.iter().map(|c| (c.conserved.circulation - self.initial.circulation).abs()).fold(0.0, f64::max)
    }

    pub fn mean_vorticity_drift(&self) -> f64 {
        (self.fin.mean_vorticity - self.initial.mean_vorticity).abs() / self.initial.mean_vorticity.abs().max(f64::MIN_POSITIVE)
    }

    pub fn energy_drift(&self) -> f64 {
        (self.fin.energy - self.initial.energy).abs() / self.initial.energy.abs().max(f64::MIN_POSITIVE)
    }
}

fn fit_rate(phases: &[(f64, f64)], m: usize) -> f64 {
    let (num, den) = phases.iter().fold((0.0, 0.0), |(n, d), (t, p)| (n + t * p, d + t * t));
    if den == 0.0 {
        0.0
    } else {
        -num / den / m as f64
    }
}

/// Integrates for time `t_end` (one period `2π/(m λ_expected)` when `None`) and measures
/// the rotation rate from the phase of mode `m`.
pub fn verify_rotation(
    sim: &Simulator,
    state0: &SimState,
    m: u32,
    lambda_expected: f64,
    t_end: Option<f64>,
    dt: f64,
    checkpoint_every: usize,
) -> Result<RotationReport> {
    if m == 0 || m as usize >= sim.n_theta() / 2 {
        return Err(Error::Config(format!("mode {m} is not resolved by n_theta = {}", sim.n_theta())));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let period = 2.0 * PI / (m as f64 * lambda_expected).abs();
    let t_end = t_end.unwrap_or(period);
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let every = checkpoint_every.max(1);
    let mu = m as usize;
    let c0 = sim.mode_correlation(&state0.omega, &state0.omega, mu);
    if c0.norm() == 0.0 {
        return Err(Error::Validation(format!("initial field has no mode-{m} content")));
    }
    let n0 = sim.norm(&state0.omega);
    let initial = sim.conserved(state0)?;
    let mut state = state0.clone();
    let mut phases: Vec<(f64, f64)> = Vec::new();
    let mut last_phase = 0.0;
    let mut checkpoints = Vec::new();
    for s in 1..=steps {
        sim.step(&mut state, dt)?;
        if s % every == 0 || s == steps {
            let c = sim.mode_correlation(&state.omega, &state0.omega, mu);
            if c.norm() < 0.5 * c0.norm() {
                return Err(Error::Validation(format!(
                    "mode-{m} correlation dropped to {:.3} of its initial value at t = {:.4}: pattern lost",
                    c.norm() / c0.norm(),
                    state.time
                )));
            }
            let mut ph = c.arg();
            while ph - last_phase > PI {
                ph -= 2.0 * PI;
            }
            while ph - last_phase < -PI {
                ph += 2.0 * PI;
            }
            last_phase = ph;
            phases.push((state.time, ph));
            let rotated = sim.rotate(&state0.omega, lambda_expected * state.time);
            let diff: Vec<f64> = state.omega.iter().zip(&rotated).map(|(a, b)| a - b).collect();
            checkpoints.push(Checkpoint {
                t: state.time,
                lambda_meas: fit_rate(&phases, mu),
                return_error: sim.norm(&diff) / n0,
                conserved: sim.conserved(&state)?,
            });
        }
    }
    let diff: Vec<f64> = state.omega.iter().zip(&state0.omega).map(|(a, b)| a - b).collect();
    let nt = sim.n_theta();
    let pert: Vec<f64> = state0
        .omega
        .chunks(nt)
        .flat_map(|row| {
            let mean = row.iter().sum::<f64>() / nt as f64;
            row.iter().map(move |v| v - mean)
        })
        .collect();
    let fin = sim.conserved(&state)?;
    Ok(RotationReport {
        lambda_expected,
        lambda_meas: fit_rate(&phases, mu),
        period,
        steps,
        dt,
        return_error: sim.norm(&diff) / n0,
        return_error_perturbation: sim.norm(&diff) / sim.norm(&pert),
        checkpoints,
        initial,
        fin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AnnulusConfig;

    fn cfg() -> AnnulusConfig {
        AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.3, 0.1).unwrap()
    }

    #[test]
    fn panel_split() {
        assert_eq!(panel_counts(384), [64, 96, 64, 96, 64]);
        assert_eq!(panel_counts(768), [128, 192, 128, 192, 128]);
    }

    #[test]
    fn radial_fields_are_steady() {
        let c = cfg();
        let profile = Profile::new(c, 0.02, 0.1).unwrap();
        let sim = Simulator::for_profile(&profile, 192, 16, Exec::Parallel).unwrap();
        let nt = 16;
        let omega: Vec<f64> = sim.grid().nodes.iter().flat_map(|&r| std::iter::repeat(2.0 * c.A + profile.varpi_unchecked(r)).take(nt)).collect();
        let mut st = SimState { omega: omega.clone(), time: 0.0 };
        sim.step(&mut st, 0.05).unwrap();
        let err = st.omega.iter().zip(&omega).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");

        let tc = vec![2.0 * c.A; omega.len()];
        let mut st = SimState { omega: tc.clone(), time: 0.0 };
        sim.step(&mut st, 0.05).unwrap();
        assert!(st.omega.iter().zip(&tc).all(|(a, b)| (a - b).abs() < 1e-10));
        let cons = sim.conserved(&st).unwrap();
        assert!((cons.circulation - c.circulation()).abs() < 1e-8);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let c = cfg();
        let profile = Profile::new(c, 0.02, 0.1).unwrap();
        let sim = Simulator::for_profile(&profile, 96, 64, Exec::Sequential).unwrap();
        let omega = vec![2.0 * c.A; sim.grid().len() * 64];
        let mut st = SimState { omega, time: 0.0 };
        let err = sim.step(&mut st, 10.0).unwrap_err();
        assert!(err.to_string().contains("CFL"));
    }

    #[test]
    fn spectral_rotation_matches_shift() {
        let c = cfg();
        let profile = Profile::new(c, 0.02, 0.1).unwrap();
        let sim = Simulator::for_profile(&profile, 96, 32, Exec::Sequential).unwrap();
        let nt = 32;
        let f = |r: f64, th: f64| r * (2.0 * th).cos() + (3.0 * th).sin();
        let field: Vec<f64> = sim.grid().nodes.iter().flat_map(|&r| (0..nt).map(move |j| f(r, 2.0 * PI * j as f64 / nt as f64))).collect();
        let rot = sim.rotate(&field, 0.3);
        for (q, v) in rot.iter().enumerate() {
            let r = sim.grid().nodes[q / nt];
            let th = 2.0 * PI * (q % nt) as f64 / nt as f64;
            assert!((v - f(r, th - 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_mode_is_advected_by_solid_rotation() {
        let c = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.5, 0.0001).unwrap();
        let grid = RadialGrid::uniform(1.0, 2.0, 64).unwrap();
        let sim = Simulator::new(grid, 32, c.circulation(), Exec::Parallel).unwrap();
        let nt = 32;
        let amp = 1e-6;
        let omega: Vec<f64> = sim
            .grid()
            .nodes
            .iter()
            .flat_map(|&r| {
                let bump = ((r - 1.0) * (2.0 - r)).powi(3) * 64.0;
                (0..nt).map(move |j| 2.0 * c.A + amp * bump * (2.0 * PI * 2.0 * j as f64 / nt as f64).cos())
            })
            .collect();
        let st = SimState { omega, time: 0.0 };
        let rep = verify_rotation(&sim, &st, 2, c.A, Some(2.0), 0.02, 10).unwrap();
        assert!((rep.lambda_meas - c.A).abs() < 0.05 * c.A, "{} vs {}", rep.lambda_meas, c.A);
    }
}
