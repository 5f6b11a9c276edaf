//! Nonlinear functional `F[λ, f]`, vorticity reconstruction from level sets,
//! linearization consistency, Sobolev distances and small-amplitude continuation.
//!
//! Band fields are sampled on the Gauss nodes of a [`ZGrid`] at `ρ = R_j + ε z`, and
//! angular samples sit on the uniform grid of the [`PoissonSolver`]. Residual arrays
//! are stored as `values[band][k * n_theta + j]`.

use crate::error::{Error, Result};
use crate::kernel::EigenSolution;
use crate::linop::{BandSetup, ZGrid};
use crate::par::{self, Exec};
use crate::poisson::{PoissonSolver, RadialGrid};
use crate::profile::Profile;
use crate::quad::{fornberg_weights, Rule};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// One angular harmonic `h_n(ρ) cos(nθ)` given by its band samples.
#[derive(Clone, Debug)]
pub struct ModeComponent {
    pub n: u32,
    pub bands: [Vec<f64>; 2],
}

/// `f(ρ, θ) = σ Σ h_n(ρ) cos(nθ)` on the two bands.
#[derive(Clone, Debug)]
pub struct LevelSetPerturbation {
    pub sigma: f64,
    pub components: Vec<ModeComponent>,
    pub eps: f64,
    pub centers: [f64; 2],
    zgrid: ZGrid,
}

impl LevelSetPerturbation {
    pub fn new(setup: &BandSetup, sigma: f64, components: Vec<ModeComponent>) -> Result<LevelSetPerturbation> {
        let nz = setup.nz();
        for c in &components {
            if c.n == 0 {
                return Err(Error::Domain("perturbations must have zero angular mean (n >= 1)".into()));
            }
            if c.bands.iter().any(|b| b.len() != nz) {
                return Err(Error::Domain(format!("band samples must have length {nz}")));
            }
        }
        Ok(LevelSetPerturbation {
            sigma,
            components,
            eps: setup.eps,
            centers: [setup.cfg.R1, setup.cfg.R2],
            zgrid: setup.zgrid.clone(),
        })
    }

    /// Single-mode perturbation from a stacked `(band 1, band 2)` vector.
    pub fn from_stacked(setup: &BandSetup, n: u32, stacked: &[f64], sigma: f64) -> Result<LevelSetPerturbation> {
        let nz = setup.nz();
        if stacked.len() != 2 * nz {
            return Err(Error::Domain(format!("stacked profile must have length {}", 2 * nz)));
        }
        let bands = [stacked[..nz].to_vec(), stacked[nz..].to_vec()];
        LevelSetPerturbation::new(setup, sigma, vec![ModeComponent { n, bands }])
    }

    /// `σ h cos(mθ)` with `h` the constructed kernel element.
    pub fn from_eigen(setup: &BandSetup, eig: &EigenSolution, sigma: f64) -> Result<LevelSetPerturbation> {
        LevelSetPerturbation::from_stacked(setup, eig.m, &eig.stacked(), sigma)
    }

    pub fn zero(setup: &BandSetup) -> LevelSetPerturbation {
        LevelSetPerturbation::new(setup, 0.0, Vec::new()).expect("empty perturbation is valid")
    }

    pub fn is_zero(&self) -> bool {
        self.sigma == 0.0 || self.components.is_empty()
    }

    /// Node values of `f(·, θ)` on each band.
    pub fn column(&self, theta: f64) -> [Vec<f64>; 2] {
        let nz = self.zgrid.len();
        let mut out = [vec![0.0; nz], vec![0.0; nz]];
        for c in &self.components {
            let w = self.sigma * (c.n as f64 * theta).cos();
            for (o, b) in out.iter_mut().zip(&c.bands) {
                o.iter_mut().zip(b).for_each(|(x, v)| *x += w * v);
            }
        }
        out
    }

    fn band_value(&self, col: &[f64], z: f64) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.zgrid.bary.eval(col, z)
        }
    }

    /// `f(r, θ)`; zero off the bands.
    pub fn eval(&self, r: f64, theta: f64) -> f64 {
        for band in 0..2 {
            let z = (r - self.centers[band]) / self.eps;
            if z.abs() <= 1.0 {
                let col = self.column(theta);
                return self.band_value(&col[band], z);
            }
        }
        0.0
    }

    /// Checks that `ρ ↦ ρ + f(ρ, θ)` is strictly increasing on both bands.
    pub fn check_monotone(&self, n_theta: usize) -> Result<()> {
        if self.is_zero() {
            return Ok(());
        }
        let samples = 400;
        for j in 0..n_theta {
            let theta = 2.0 * PI * j as f64 / n_theta as f64;
            let col = self.column(theta);
            for band in 0..2 {
                let mut prev = f64::NEG_INFINITY;
                for q in 0..=samples {
                    let z = -1.0 + 2.0 * q as f64 / samples as f64;
                    let v = self.centers[band] + self.eps * z + self.band_value(&col[band], z);
                    if v <= prev {
                        return Err(Error::Validation(format!(
                            "r + f(r, theta) is not increasing on band {} at theta = {theta:.6}",
                            band + 1
                        )));
                    }
                    prev = v;
                }
            }
        }
        Ok(())
    }

    /// Solves `R_j + ε z + f_j(z) = r` for `z ∈ [-1, 1]` by bisection.
    fn invert(&self, band: usize, col: &[f64], r: f64) -> f64 {
        let g = |z: f64| self.centers[band] + self.eps * z + self.band_value(col, z) - r;
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        if g(lo) >= 0.0 {
            return lo;
        }
        if g(hi) <= 0.0 {
            return hi;
        }
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Tensor-grid samples `ω[i * n_theta + j]`.
#[derive(Clone, Debug)]
pub struct VorticityField {
    pub values: Vec<f64>,
    pub n_theta: usize,
}

impl VorticityField {
    /// `∫ ω dA` by radial quadrature and the angular trapezoid rule.
    pub fn mass(&self, grid: &RadialGrid) -> f64 {
        let nt = self.n_theta;
        let rows: Vec<f64> = (0..grid.len())
            .map(|i| grid.nodes[i] * self.values[i * nt..(i + 1) * nt].iter().sum::<f64>() * 2.0 * PI / nt as f64)
            .collect();
        grid.integrate(&rows)
    }
}

/// `ω = 2A + ϖ_{ε,κ} ∘ Φ₁⁻¹[f]` on the deformed bands, `2A + ε` between them, `2A` outside.
pub fn build_vorticity(
    f: &LevelSetPerturbation,
    profile: &Profile,
    grid: &RadialGrid,
    n_theta: usize,
    exec: Exec,
) -> Result<VorticityField> {
    f.check_monotone(n_theta)?;
    let two_a = 2.0 * profile.cfg.A;
    let e = profile.eps;
    let nr = grid.len();
    if f.is_zero() {
        let mut values = vec![0.0; nr * n_theta];
        for (i, row) in values.chunks_mut(n_theta).enumerate() {
            row.fill(two_a + profile.varpi_unchecked(grid.nodes[i]));
        }
        return Ok(VorticityField { values, n_theta });
    }
    let columns = par::map_range(exec, n_theta, |j| {
        let theta = 2.0 * PI * j as f64 / n_theta as f64;
        let col = f.column(theta);
        let edge = |band: usize, z: f64| f.centers[band] + e * z + f.band_value(&col[band], z);
        let bounds = [(edge(0, -1.0), edge(0, 1.0)), (edge(1, -1.0), edge(1, 1.0))];
        (0..nr)
            .map(|i| {
                let r = grid.nodes[i];
                if r < bounds[0].0 {
                    two_a
                } else if r <= bounds[0].1 {
                    let z = f.invert(0, &col[0], r);
                    two_a + profile.varpi_unchecked(f.centers[0] + e * z)
                } else if r < bounds[1].0 {
                    two_a + e
                } else if r <= bounds[1].1 {
                    let z = f.invert(1, &col[1], r);
                    two_a + profile.varpi_unchecked(f.centers[1] + e * z)
                } else {
                    two_a
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut values = vec![0.0; nr * n_theta];
    for (j, c) in columns.iter().enumerate() {
        for i in 0..nr {
            values[i * n_theta + j] = c[i];
        }
    }
    Ok(VorticityField { values, n_theta })
}

/// Samples of `F[λ, f]` on the band nodes times the angular grid.
#[derive(Clone, Debug)]
pub struct FunctionalResidual {
    pub values: [Vec<f64>; 2],
    pub n_theta: usize,
    pub nz: usize,
}

impl FunctionalResidual {
    pub fn sup(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(Σ_band Σ_k ω_k Σ_j F² 2π/n_θ)^{1/2}`.
    pub fn l2(&self, zgrid: &ZGrid) -> f64 {
        let nt = self.n_theta;
        let mut acc = 0.0;
        for band in &self.values {
            for k in 0..self.nz {
                acc += zgrid.weights[k] * band[k * nt..(k + 1) * nt].iter().map(|v| v * v).sum::<f64>();
            }
        }
        (acc * 2.0 * PI / nt as f64).sqrt()
    }

    /// Cosine coefficient of mode `n` at every band node, stacked `(band 1, band 2)`.
    pub fn mode_cos(&self, n: u32) -> Vec<f64> {
        let nt = self.n_theta;
        let cs: Vec<f64> = (0..nt).map(|j| (2.0 * PI * (n as usize * j) as f64 / nt as f64).cos()).collect();
        self.values
            .iter()
            .flat_map(|band| {
                let cs = &cs;
                (0..self.nz).map(move |k| 2.0 / nt as f64 * (0..nt).map(|j| band[k * nt + j] * cs[j]).sum::<f64>())
            })
            .collect()
    }

    /// Largest angular mean over all band nodes.
    pub fn max_row_mean(&self) -> f64 {
        let nt = self.n_theta;
        self.values
            .iter()
            .flat_map(|b| b.chunks(nt).map(|row| (row.iter().sum::<f64>() / nt as f64).abs()))
            .fold(0.0, f64::max)
    }

    pub fn difference(&self, other: &FunctionalResidual, scale: f64) -> FunctionalResidual {
        let values = [0, 1].map(|b| self.values[b].iter().zip(&other.values[b]).map(|(x, y)| (x - y) * scale).collect());
        FunctionalResidual { values, n_theta: self.n_theta, nz: self.nz }
    }
}

/// Evaluates `F[λ, f] = λ(ρ + f)²/2 + ψ̄[f] - A[λ, f]` on the band nodes.
pub fn functional_f(
    lambda: f64,
    f: &LevelSetPerturbation,
    profile: &Profile,
    solver: &PoissonSolver,
    exec: Exec,
) -> Result<FunctionalResidual> {
    let nt = solver.n_theta;
    let grid = &solver.grid;
    let omega = build_vorticity(f, profile, grid, nt, exec)?;
    let stream = solver.solve_full(&omega.values, profile.cfg.circulation(), exec)?;
    let nz = f.zgrid.len();
    let nodes = &f.zgrid.nodes;
    let nr = grid.len();
    let (rmin, rmax) = (grid.r_min(), grid.r_max());
    let columns = par::map_range(exec, nt, |j| -> Result<[Vec<f64>; 2]> {
        let theta = solver.theta(j);
        let col = f.column(theta);
        let psi_col: Vec<f64> = (0..nr).map(|i| stream.psi[i * nt + j]).collect();
        let mut out = [vec![0.0; nz], vec![0.0; nz]];
        for band in 0..2 {
            for k in 0..nz {
                let rho = f.centers[band] + f.eps * nodes[k];
                let rt = rho + if f.is_zero() { 0.0 } else { col[band][k] };
                if rt < rmin || rt > rmax {
                    return Err(Error::Numeric(format!("deformed radius {rt} leaves the grid [{rmin}, {rmax}]")));
                }
                out[band][k] = 0.5 * lambda * rt * rt + grid.interp(&psi_col, rt);
            }
        }
        Ok(out)
    });
    let mut values = [vec![0.0; nz * nt], vec![0.0; nz * nt]];
    for (j, c) in columns.into_iter().enumerate() {
        let c = c?;
        for band in 0..2 {
            for k in 0..nz {
                values[band][k * nt + j] = c[band][k];
            }
        }
    }
    for band in values.iter_mut() {
        for row in band.chunks_mut(nt) {
            let mean = row.iter().sum::<f64>() / nt as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Ok(FunctionalResidual { values, n_theta: nt, nz })
}

/// Expected first variation `ℒₙ[λ]h / x` spread over the angular grid as `cos(nθ)`.
pub fn linearized_field(setup: &BandSetup, lambda: f64, n: u32, h: &[f64], n_theta: usize) -> FunctionalResidual {
    let nz = setup.nz();
    let lh = setup.assemble(n, lambda).apply(h);
    let values = [0, 1].map(|band| {
        let mut v = vec![0.0; nz * n_theta];
        for k in 0..nz {
            let x = setup.x(band, setup.zgrid.nodes[k]);
            for j in 0..n_theta {
                let th = 2.0 * PI * (n as usize * j) as f64 / n_theta as f64;
                v[k * n_theta + j] = lh[band * nz + k] / x * th.cos();
            }
        }
        v
    });
    FunctionalResidual { values, n_theta, nz }
}

#[derive(Clone, Debug)]
pub struct LinearizationReport {
    /// `(τ, ‖(F[λ,τh] - F[λ,0])/τ - ℒh‖ / ‖ℒh‖)`.
    pub rows: Vec<(f64, f64)>,
    /// Relative size of the finite-difference quotient outside mode `n` at the last τ.
    pub off_mode: f64,
}

/// Compares finite-difference quotients of `F` with the assembled band operator.
pub fn linearization_check(
    setup: &BandSetup,
    profile: &Profile,
    solver: &PoissonSolver,
    lambda: f64,
    n: u32,
    h: &[f64],
    taus: &[f64],
    exec: Exec,
) -> Result<LinearizationReport> {
    let zero = LevelSetPerturbation::zero(setup);
    let f0 = functional_f(lambda, &zero, profile, solver, exec)?;
    let expected = linearized_field(setup, lambda, n, h, solver.n_theta);
    let scale = expected.l2(&setup.zgrid);
    let mut rows = Vec::new();
    let mut off_mode = 0.0;
    for &tau in taus {
        let pert = LevelSetPerturbation::from_stacked(setup, n, h, tau)?;
        let ft = functional_f(lambda, &pert, profile, solver, exec)?;
        let quotient = ft.difference(&f0, 1.0 / tau);
        let err = quotient.difference(&expected, 1.0).l2(&setup.zgrid) / scale;
        rows.push((tau, err));
        let proj = quotient.mode_cos(n);
        let nz = setup.nz();
        let nt = solver.n_theta;
        let mut rest = quotient.clone();
        for band in 0..2 {
            for k in 0..nz {
                for j in 0..nt {
                    let th = 2.0 * PI * (n as usize * j) as f64 / nt as f64;
                    rest.values[band][k * nt + j] -= proj[band * nz + k] * th.cos();
                }
            }
        }
        off_mode = rest.l2(&setup.zgrid) / quotient.l2(&setup.zgrid);
    }
    Ok(LinearizationReport { rows, off_mode })
}

/// Homogeneous Sobolev data of `ω - 2A` and the interpolated bound.
#[derive(Clone, Debug)]
pub struct SobolevReport {
    pub s: f64,
    /// `‖ω - 2A‖_{L²}` on the annulus.
    pub l2: f64,
    /// `‖ω‖_{Ḣ¹}`.
    pub h1: f64,
    /// `‖ω‖_{Ḣ²}` (Frobenius norm of the Hessian).
    pub h2: f64,
    /// `‖ϖ'‖²_{L²}` on each band (one-dimensional).
    pub band_h1_sq: [f64; 2],
    /// `‖ϖ''‖²_{L²}` on each band (one-dimensional).
    pub band_h2_sq: [f64; 2],
    /// `4 ‖Θ‖²_∞ / (εκ)`.
    pub band_h2_bound: f64,
    /// Interpolated `Ḣ^s` bound.
    pub interpolated: f64,
}

fn interpolate_norms(s: f64, l2: f64, h1: f64, h2: f64) -> f64 {
    if s <= 1.0 {
        l2.powf(1.0 - s) * h1.powf(s)
    } else {
        h1.powf(2.0 - s) * h2.powf(s - 1.0)
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..1.5).contains(&s) {
        return Err(Error::Domain(format!("Sobolev index must lie in [0, 3/2), got {s}")));
    }
    Ok(())
}

fn band_norms(profile: &Profile) -> ([f64; 2], [f64; 2]) {
    let rule = Rule::gauss(20);
    let e = profile.eps;
    let cfg = profile.cfg;
    let mut h1 = [0.0; 2];
    let mut h2 = [0.0; 2];
    for (band, c) in [cfg.R1, cfg.R2].into_iter().enumerate() {
        h1[band] = rule.composite(c - e, c + e, 128, |r| profile.varpi_prime_unchecked(r).powi(2));
        h2[band] = rule.composite(c - e, c + e, 128, |r| profile.varpi_second(r).powi(2));
    }
    (h1, h2)
}

/// Sobolev distance of the radial profile `2A + ϖ_{ε,κ}` from Taylor-Couette.
pub fn sobolev_distance(profile: &Profile, s: f64) -> Result<SobolevReport> {
    check_s(s)?;
    let rule = Rule::gauss(20);
    let e = profile.eps;
    let cfg = profile.cfg;
    let bands = [(cfg.R1 - e, cfg.R1 + e), (cfg.R2 - e, cfg.R2 + e)];
    let mut l2 = rule.composite(cfg.R1 + e, cfg.R2 - e, 8, |r| e * e * r);
    let mut h1 = 0.0;
    let mut h2 = 0.0;
    for (a, b) in bands {
        l2 += rule.composite(a, b, 128, |r| profile.varpi_unchecked(r).powi(2) * r);
        h1 += rule.composite(a, b, 128, |r| profile.varpi_prime_unchecked(r).powi(2) * r);
        h2 += rule.composite(a, b, 128, |r| {
            let d1 = profile.varpi_prime_unchecked(r);
            let d2 = profile.varpi_second(r);
            (d2 * d2 + d1 * d1 / (r * r)) * r
        });
    }
    let (l2, h1, h2) = ((2.0 * PI * l2).sqrt(), (2.0 * PI * h1).sqrt(), (2.0 * PI * h2).sqrt());
    let (band_h1_sq, band_h2_sq) = band_norms(profile);
    Ok(SobolevReport {
        s,
        l2,
        h1,
        h2,
        band_h1_sq,
        band_h2_sq,
        band_h2_bound: 4.0 * profile.mollifier.theta_max().powi(2) / (e * profile.kappa),
        interpolated: interpolate_norms(s, l2, h1, h2),
    })
}

/// Radial first and second derivatives of every θ-column by element-local
/// Fornberg weights (exact for the element polynomials).
fn radial_derivatives(grid: &RadialGrid, field: &[f64], nt: usize) -> (Vec<f64>, Vec<f64>) {
    let nr = grid.len();
    let mut d1 = vec![0.0; nr * nt];
    let mut d2 = vec![0.0; nr * nt];
    let order = grid.reference_rule().len() - 1;
    for i in 0..nr {
        let e = grid.element_of(grid.nodes[i]).min(grid.element_count() - 1);
        let start = e * order;
        let xs = &grid.nodes[start..=start + order];
        let w = fornberg_weights(grid.nodes[i], xs, 2);
        for j in 0..nt {
            let mut a = 0.0;
            let mut b = 0.0;
            for (q, _) in xs.iter().enumerate() {
                let v = field[(start + q) * nt + j];
                a += w[1][q] * v;
                b += w[2][q] * v;
            }
            d1[i * nt + j] = a;
            d2[i * nt + j] = b;
        }
    }
    (d1, d2)
}

/// Sobolev distance of a sampled vorticity field, by radial Fornberg and angular
/// spectral differentiation on the solver grid.
pub fn sobolev_distance_field(
    profile: &Profile,
    solver: &PoissonSolver,
    omega: &VorticityField,
    s: f64,
    exec: Exec,
) -> Result<SobolevReport> {
    check_s(s)?;
    let grid = &solver.grid;
    let nt = solver.n_theta;
    let nr = grid.len();
    let two_a = 2.0 * profile.cfg.A;
    let w: Vec<f64> = omega.values.iter().map(|v| v - two_a).collect();
    let (wr, wrr) = radial_derivatives(grid, &w, nt);
    let wt = solver.d_theta(&w, exec);
    let wtt = solver.d_theta(&wt, exec);
    let wrt = solver.d_theta(&wr, exec);
    let dth = 2.0 * PI / nt as f64;
    let mut rows = [vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]];
    for i in 0..nr {
        let r = grid.nodes[i];
        for j in 0..nt {
            let q = i * nt + j;
            rows[0][i] += w[q] * w[q] * r * dth;
            rows[1][i] += (wr[q].powi(2) + (wt[q] / r).powi(2)) * r * dth;
            let hrr = wrr[q];
            let hrt = wrt[q] / r - wt[q] / (r * r);
            let htt = wr[q] / r + wtt[q] / (r * r);
            rows[2][i] += (hrr * hrr + 2.0 * hrt * hrt + htt * htt) * r * dth;
        }
    }
    let [l2, h1, h2] = rows.map(|row| grid.integrate(&row).sqrt());
    let (band_h1_sq, band_h2_sq) = band_norms(profile);
    Ok(SobolevReport {
        s,
        l2,
        h1,
        h2,
        band_h1_sq,
        band_h2_sq,
        band_h2_bound: 4.0 * profile.mollifier.theta_max().powi(2) / (profile.eps * profile.kappa),
        interpolated: interpolate_norms(s, l2, h1, h2),
    })
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub sigma: f64,
    pub lambda: f64,
    /// Sup norm of the mode-m collocation residual.
    pub residual: f64,
    /// Sup norm of the full residual field, all modes included.
    pub full_residual: f64,
    /// `‖f/σ - h‖ / ‖h‖` in the band L² pairing.
    pub profile_gap: f64,
    pub newton_iterations: usize,
    pub profile: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    pub steps: usize,
    pub tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { steps: 4, tol: 1e-9, max_newton: 40, max_halvings: 5 }
    }
}

struct Corrector<'a> {
    setup: &'a BandSetup,
    profile: &'a Profile,
    solver: &'a PoissonSolver,
    m: u32,
    h: Vec<f64>,
    hh: f64,
    xs: Vec<f64>,
    exec: Exec,
}

impl Corrector<'_> {
    fn residual(&self, u: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
        let pert = LevelSetPerturbation::from_stacked(self.setup, self.m, u, 1.0)?;
        let full = functional_f(lambda, &pert, self.profile, self.solver, self.exec)?;
        Ok((full.mode_cos(self.m), full.sup()))
    }

    fn newton(&self, sigma: f64, mut u: Vec<f64>, mut lambda: f64, opts: &ContinuationOptions) -> Result<(Vec<f64>, f64, f64, f64, usize)> {
        let n = u.len();
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&self.setup.assemble(self.m, lambda).matrix());
        for k in 0..n {
            jac[(k, n)] = self.xs[k] * self.xs[k] * u[k];
            jac[(n, k)] = self.setup.zgrid.weights[k % self.setup.nz()] * self.h[k] / self.hh;
        }
        let lu = jac.lu();
        let mut prev = f64::INFINITY;
        for it in 1..=opts.max_newton {
            let (fm, full) = self.residual(&u, lambda)?;
            let res = fm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let stalled = it > 1 && res > 0.5 * prev;
            if res <= 1e-3 * opts.tol || (stalled && res <= opts.tol) {
                return Ok((u, lambda, res, full, it - 1));
            }
            if stalled && it > 2 && res >= prev {
                return Err(Error::Numeric(format!("Newton stalled at residual {res:.3e}")));
            }
            prev = prev.min(res);
            let mut rhs = DVector::zeros(n + 1);
            for k in 0..n {
                rhs[k] = -self.xs[k] * fm[k];
            }
            rhs[n] = -(self.setup.l2_inner(&u, &self.h) / self.hh - sigma);
            let delta = lu.solve(&rhs).ok_or_else(|| Error::Numeric("singular continuation Jacobian".into()))?;
            u.iter_mut().enumerate().for_each(|(k, v)| *v += delta[k]);
            lambda += delta[n];
        }
        Err(Error::Numeric(format!("Newton did not reach {:.1e} in {} iterations", opts.tol, opts.max_newton)))
    }
}

/// Continues the bifurcating branch from `σ = 0` to `sigma_target` with a chord Newton
/// corrector on the mode-m band samples and the amplitude constraint `⟨f, h⟩/⟨h, h⟩ = σ`.
pub fn continue_branch(
    setup: &BandSetup,
    profile: &Profile,
    solver: &PoissonSolver,
    eig: &EigenSolution,
    sigma_target: f64,
    opts: &ContinuationOptions,
    exec: Exec,
) -> Result<Vec<BranchPoint>> {
    let nz = setup.nz();
    let h = eig.stacked();
    let hh = setup.l2_inner(&h, &h);
    let xs: Vec<f64> = (0..2 * nz).map(|k| setup.x(k / nz, setup.zgrid.nodes[k % nz])).collect();
    let corr = Corrector { setup, profile, solver, m: eig.m, h: h.clone(), hh, xs, exec };
    let mut points = vec![BranchPoint {
        sigma: 0.0,
        lambda: eig.lambda(),
        residual: 0.0,
        full_residual: 0.0,
        profile_gap: 0.0,
        newton_iterations: 0,
        profile: vec![0.0; 2 * nz],
    }];
    let mut step = sigma_target / opts.steps.max(1) as f64;
    let mut halvings = 0;
    let mut sigma = 0.0;
    while sigma < sigma_target * (1.0 - 1e-12) {
        let next = (sigma + step).min(sigma_target);
        let last = points.last().unwrap();
        let guess: Vec<f64> = if last.sigma > 0.0 {
            last.profile.iter().map(|v| v * next / last.sigma).collect()
        } else {
            h.iter().map(|v| v * next).collect()
        };
        match corr.newton(next, guess, last.lambda, opts) {
            Ok((u, lambda, residual, full_residual, its)) => {
                let diff: Vec<f64> = u.iter().zip(&h).map(|(a, b)| a / next - b).collect();
                let profile_gap = (setup.l2_inner(&diff, &diff) / hh).sqrt();
                points.push(BranchPoint { sigma: next, lambda, residual, full_residual, profile_gap, newton_iterations: its, profile: u });
                sigma = next;
            }
            Err(e) => {
                halvings += 1;
                if halvings > opts.max_halvings {
                    return Err(Error::Numeric(format!("continuation failed at sigma = {next:.3e}: {e}")));
                }
                step *= 0.5;
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AnnulusConfig;
    use crate::kernel;

    fn fixture(eps: f64) -> (Profile, BandSetup, PoissonSolver) {
        let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, 0.1).unwrap();
        let profile = Profile::new(cfg, eps, 0.1).unwrap();
        let setup = BandSetup::new(&profile, ZGrid::new(48));
        let grid = RadialGrid::with_band_margin(&cfg, eps, eps, &[32, 128, 32, 128, 32]).unwrap();
        let solver = PoissonSolver::new(grid, 16, Exec::Parallel).unwrap();
        (profile, setup, solver)
    }

    fn smooth(setup: &BandSetup, c: [f64; 4]) -> Vec<f64> {
        (0..2 * setup.nz())
            .map(|k| {
                let z = setup.zgrid.nodes[k % setup.nz()];
                let s = if k < setup.nz() { 1.0 } else { -0.7 };
                s * (c[0] + c[1] * z + c[2] * z * z + c[3] * (2.0 * z).sin())
            })
            .collect()
    }

    #[test]
    fn zero_perturbation_is_radial() {
        let (profile, setup, solver) = fixture(0.01);
        let zero = LevelSetPerturbation::zero(&setup);
        let w = build_vorticity(&zero, &profile, &solver.grid, 16, Exec::Sequential).unwrap();
        for (i, &r) in solver.grid.nodes.iter().enumerate() {
            for j in 0..16 {
                assert_eq!(w.values[i * 16 + j], 2.0 * profile.cfg.A + profile.varpi_unchecked(r));
            }
        }
        let f = functional_f(0.3, &zero, &profile, &solver, Exec::Parallel).unwrap();
        assert!(f.sup() < 1e-13, "{}", f.sup());
    }

    #[test]
    fn level_sets_round_trip() {
        let (profile, setup, solver) = fixture(0.01);
        let h = smooth(&setup, [1.0, 0.5, -0.3, 0.2]);
        let f = LevelSetPerturbation::from_stacked(&setup, 2, &h, 2e-3).unwrap();
        let nt = 16;
        let w = build_vorticity(&f, &profile, &solver.grid, nt, Exec::Parallel).unwrap();
        assert!(w.values.iter().all(|v| v.is_finite()));
        for j in 0..nt {
            let th = solver.theta(j);
            let col = f.column(th);
            for band in 0..2 {
                for &z in &[-0.8, -0.1, 0.35, 0.9] {
                    let rho = f.centers[band] + f.eps * z;
                    let rt = rho + f.band_value(&col[band], z);
                    let zz = f.invert(band, &col[band], rt);
                    let back = profile.varpi_unchecked(f.centers[band] + f.eps * zz);
                    assert!((back - profile.varpi_unchecked(rho)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn non_monotone_map_is_rejected() {
        let (profile, setup, solver) = fixture(0.01);
        let h = smooth(&setup, [0.0, 1.0, 0.0, 0.0]);
        let f = LevelSetPerturbation::from_stacked(&setup, 1, &h, 0.05).unwrap();
        assert!(build_vorticity(&f, &profile, &solver.grid, 16, Exec::Parallel).is_err());
    }

    #[test]
    fn residual_has_zero_mean_and_parity() {
        let (profile, setup, solver) = fixture(0.01);
        let h = smooth(&setup, [0.4, -0.2, 0.1, 0.3]);
        let f = LevelSetPerturbation::from_stacked(&setup, 3, &h, 1e-3).unwrap();
        let r = functional_f(0.2, &f, &profile, &solver, Exec::Parallel).unwrap();
        assert!(r.max_row_mean() < 1e-15 * r.sup().max(1.0) * 100.0);
        let nt = r.n_theta;
        for band in &r.values {
            for row in band.chunks(nt) {
                for j in 1..nt {
                    assert!((row[j] - row[nt - j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linearization_is_first_order() {
        let (profile, setup, solver) = fixture(0.01);
        let h = smooth(&setup, [1.0, 0.3, -0.5, 0.2]);
        let rep = linearization_check(&setup, &profile, &solver, 0.1, 2, &h, &[1e-4, 5e-5], Exec::Parallel).unwrap();
        let (e1, e2) = (rep.rows[0].1, rep.rows[1].1);
        assert!(e1 < 0.02, "{rep:?}");
        assert!(e2 < 0.7 * e1, "{rep:?}");
        assert!(rep.off_mode < 1e-2);
    }

    #[test]
    fn sobolev_band_identities() {
        let (profile, _, _) = fixture(0.01);
        let rep = sobolev_distance(&profile, 1.0).unwrap();
        let rule = Rule::gauss(20);
        let direct = profile.eps * rule.composite(-1.0, 1.0, 128, |z| profile.dphi(z).powi(2));
        assert!((rep.band_h1_sq[1] - direct).abs() < 1e-12 * direct);
        assert!(rep.band_h2_sq.iter().all(|&v| v <= rep.band_h2_bound));
        assert!(sobolev_distance(&profile, 1.5).is_err());
        assert!((rep.interpolated - rep.h1).abs() < 1e-15);
    }

    #[test]
    fn grid_sobolev_matches_radial_quadrature() {
        let (profile, setup, solver) = fixture(0.01);
        let zero = LevelSetPerturbation::zero(&setup);
        let w = build_vorticity(&zero, &profile, &solver.grid, 16, Exec::Parallel).unwrap();
        let g = sobolev_distance_field(&profile, &solver, &w, 1.0, Exec::Parallel).unwrap();
        let a = sobolev_distance(&profile, 1.0).unwrap();
        assert!((g.l2 - a.l2).abs() < 1e-3 * a.l2);
        assert!((g.h1 - a.h1).abs() < 1e-3 * a.h1, "{} {}", g.h1, a.h1);
        assert!((g.h2 - a.h2).abs() < 2e-2 * a.h2, "{} {}", g.h2, a.h2);
    }

    #[test]
    fn branch_starts_at_the_eigenvalue() {
        let (profile, setup, solver) = fixture(0.01);
        let eig = kernel::construct(&setup, 1).unwrap();
        let pts = continue_branch(&setup, &profile, &solver, &eig, 1e-3, &ContinuationOptions { steps: 2, ..Default::default() }, Exec::Parallel).unwrap();
        let last = pts.last().unwrap();
        assert!(last.residual <= 1e-9);
        assert!((last.lambda - eig.lambda()).abs() < 1e-2 * eig.lambda().abs(), "{} {}", last.lambda, eig.lambda());
        assert!(last.profile_gap < 0.05, "{}", last.profile_gap);
    }
}
