// SPDX-License-Identifier: MIT OR Apache-2.0
//! Modal solver for `Δ_B ψ = ω` on the annulus, `Δ_B = -(∂_rr + ∂_r/r + ∂_θθ/r²)`,
//! with `ψ(r1) = 0`, `ψ(r2) = γ`.
//!
//! Radial functions live on a grid of Gauss-Lobatto elements. Mode `n ≥ 1` is solved
//! with the hyperbolic Green's function of `f'' + f'/r - n² f / r² = g`, written as two
//! scaled Volterra integrals that are accumulated element by element in O(N). Every
//! exponential appears as a ratio bounded by one, so large `n` is safe.

use crate::domain::AnnulusConfig;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::quad::{cumulative_matrix, Barycentric, Rule};
use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

/// Polynomial order of every radial element.
pub const ORDER: usize = 16;

/// `(𝒮ₙ(x), 𝒞ₙ(x)) = (sinh(n log x), cosh(n log x))`.
pub fn sn_cn(n: u32, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("sn_cn needs x > 0, got {x}")));
    }
    let t = n as f64 * x.ln();
    if t.abs() > 700.0 {
        let h = 0.5 * t.abs().exp();
        return Ok((t.signum() * h, h));
    }
    let p = x.powi(n as i32);
    let q = 1.0 / p;
    Ok((0.5 * (p - q), 0.5 * (p + q)))
}

/// 𝒮ₙ(x) for x > 0.
pub fn sn(n: u32, x: f64) -> f64 {
    let p = x.powi(n as i32);
    0.5 * (p - 1.0 / p)
}

/// 𝒞ₙ(x) for x > 0.
pub fn cn(n: u32, x: f64) -> f64 {
    let p = x.powi(n as i32);
    0.5 * (p + 1.0 / p)
}

/// Radial grid of Gauss-Lobatto elements of order [`ORDER`] sharing end nodes.
#[derive(Clone, Debug)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    elements: Vec<(f64, f64)>,
    ref_rule: Rule,
    ref_cum: DMatrix<f64>,
    ref_bary: Barycentric,
}

impl RadialGrid {
    /// Panels `[breaks[i], breaks[i+1]]`, each with `counts[i]` nodes (a multiple of
    /// [`ORDER`]) split into equal elements.
    pub fn from_panels(breaks: &[f64], counts: &[usize]) -> Result<RadialGrid> {
        if breaks.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::Config("panel breaks and node counts do not match".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!("panel breaks must increase strictly: {breaks:?}")));
        }
        if let Some(c) = counts.iter().find(|&&c| c == 0 || c % ORDER != 0) {
            return Err(Error::Config(format!("nodes_per_panel entries must be positive multiples of {ORDER}, got {c}")));
        }
        let mut elements = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            let ne = c / ORDER;
            let h = (breaks[k + 1] - breaks[k]) / ne as f64;
            for e in 0..ne {
                let a = breaks[k] + h * e as f64;
                let b = if e + 1 == ne { breaks[k + 1] } else { a + h };
                elements.push((a, b));
            }
        }
        let ref_rule = Rule::lobatto(ORDER);
        let ref_cum = cumulative_matrix(&ref_rule.nodes);
        let ref_bary = Barycentric::new(&ref_rule.nodes);
        let n = elements.len() * ORDER + 1;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for (e, &(a, b)) in elements.iter().enumerate() {
            let h = 0.5 * (b - a);
            for (k, (&x, &w)) in ref_rule.nodes.iter().zip(&ref_rule.weights).enumerate() {
                nodes[e * ORDER + k] = if k == 0 { a } else if k == ORDER { b } else { a + h * (x + 1.0) };
                weights[e * ORDER + k] += w * h;
            }
        }
        Ok(RadialGrid { nodes, weights, elements, ref_rule, ref_cum, ref_bary })
    }

    /// Panels `[r1, R1-ε, R1+ε, R2-ε, R2+ε, r2]`.
    pub fn for_profile(cfg: &AnnulusConfig, eps: f64, counts: &[usize; 5]) -> Result<RadialGrid> {
        RadialGrid::with_band_margin(cfg, eps, 0.0, counts)
    }

    /// Like [`RadialGrid::for_profile`] with the two band panels widened by `margin`
    /// on each side, so deformed bands stay inside finely resolved panels.
    pub fn with_band_margin(cfg: &AnnulusConfig, eps: f64, margin: f64, counts: &[usize; 5]) -> Result<RadialGrid> {
        let w = eps + margin;
        let breaks = [cfg.r1, cfg.R1 - w, cfg.R1 + w, cfg.R2 - w, cfg.R2 + w, cfg.r2];
        RadialGrid::from_panels(&breaks, counts)
    }

    /// `n` nodes spread over equal elements (`n` a multiple of [`ORDER`]).
    pub fn uniform(r1: f64, r2: f64, n: usize) -> Result<RadialGrid> {
        RadialGrid::from_panels(&[r1, r2], &[n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the element containing `r` (clamped to the grid).
    pub fn element_of(&self, r: f64) -> usize {
        let e = self.elements.partition_point(|&(_, b)| b < r);
        e.min(self.elements.len() - 1)
    }

    /// First global node index of element `e` and the interpolation coefficients of
    /// its `ORDER + 1` nodes at `r`.
    pub fn interp_coefficients(&self, r: f64) -> (usize, Vec<f64>) {
        let e = self.element_of(r);
        let (a, b) = self.elements[e];
        let x = (2.0 * (r - a) / (b - a) - 1.0).clamp(-1.0, 1.0);
        (e * ORDER, self.ref_bary.coefficients(x))
    }

    /// Element-wise polynomial interpolation of nodal `values` at `r`.
    pub fn interp(&self, values: &[f64], r: f64) -> f64 {
        let e = self.element_of(r);
        let (a, b) = self.elements[e];
        let x = (2.0 * (r - a) / (b - a) - 1.0).clamp(-1.0, 1.0);
        self.ref_bary.eval(&values[e * ORDER..=e * ORDER + ORDER], x)
    }

    /// `∫_{r_min}^{r_k} v` at every node.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (e, &(a, b)) in self.elements.iter().enumerate() {
            let h = 0.5 * (b - a);
            let j = e * ORDER;
            let base = out[j];
            for k in 1..=ORDER {
                let s: f64 = (0..=ORDER).map(|l| self.ref_cum[(k, l)] * values[j + l]).sum();
                out[j + k] = base + h * s;
            }
        }
        out
    }

    /// `∫ v` over the whole grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Reference Lobatto rule of one element.
    pub fn reference_rule(&self) -> &Rule {
        &self.ref_rule
    }
}

trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// Precomputed Green's-function weights for one mode `n ≥ 1` on a grid.
#[derive(Clone, Debug)]
pub struct ModeKernel {
    n: u32,
    fwd: Vec<f64>,
    fwd_carry: Vec<f64>,
    bwd: Vec<f64>,
    bwd_carry: Vec<f64>,
    g1: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    rs: Vec<f64>,
}

const BLOCK: usize = ORDER * (ORDER + 1);

impl ModeKernel {
    pub fn new(grid: &RadialGrid, n: u32) -> Result<ModeKernel> {
        if n == 0 {
            return Err(Error::Domain("mode 0 is handled by solve_axisymmetric".into()));
        }
        let nf = n as f64;
        let r1 = grid.r_min();
        let r2 = grid.r_max();
        let npts = grid.len();
        let e_of: Vec<f64> = grid.nodes.iter().map(|&r| nf * (r / r1).ln()).collect();
        let f_of: Vec<f64> = grid.nodes.iter().map(|&r| nf * (r2 / r).ln()).collect();
        let de: Vec<f64> = e_of.iter().map(|&e| -(-2.0 * e).exp_m1()).collect();
        let df: Vec<f64> = f_of.iter().map(|&f| -(-2.0 * f).exp_m1()).collect();
        let dtot = -(-2.0 * nf * (r2 / r1).ln()).exp_m1();
        let ne = grid.element_count();
        let mut fwd = vec![0.0; ne * BLOCK];
        let mut fwd_carry = vec![0.0; ne * ORDER];
        let mut bwd = vec![0.0; ne * BLOCK];
        let mut bwd_carry = vec![0.0; ne * ORDER];
        for (e, &(a, b)) in grid.elements.iter().enumerate() {
            let h = 0.5 * (b - a);
            let j = e * ORDER;
            for k in 1..=ORDER {
                let gk = j + k;
                let row = e * BLOCK + (k - 1) * (ORDER + 1);
                fwd_carry[e * ORDER + k - 1] = if de[j] == 0.0 { 0.0 } else { (e_of[j] - e_of[gk]).exp() * de[j] / de[gk] };
                for l in 0..=ORDER {
                    let gl = j + l;
                    let ratio = (e_of[gl] - e_of[gk]).exp() * de[gl] / de[gk];
                    fwd[row + l] = h * grid.ref_cum[(k, l)] * ratio;
                }
            }
            let q = j + ORDER;
            for k in 0..ORDER {
                let gk = j + k;
                let row = e * BLOCK + k * (ORDER + 1);
                bwd_carry[e * ORDER + k] = if df[q] == 0.0 { 0.0 } else { (f_of[q] - f_of[gk]).exp() * df[q] / df[gk] };
                for l in 0..=ORDER {
                    let gl = j + l;
                    let ratio = (f_of[gl] - f_of[gk]).exp() * df[gl] / df[gk];
                    bwd[row + l] = h * (grid.ref_cum[(ORDER, l)] - grid.ref_cum[(k, l)]) * ratio;
                }
            }
        }
        let mut g1 = vec![0.0; npts];
        let mut h1 = vec![0.0; npts];
        let mut h2 = vec![0.0; npts];
        for i in 0..npts {
            g1[i] = de[i] * df[i] / (2.0 * dtot);
            h1[i] = (1.0 + (-2.0 * f_of[i]).exp()) * de[i] / (2.0 * dtot);
            h2[i] = (1.0 + (-2.0 * e_of[i]).exp()) * df[i] / (2.0 * dtot);
        }
        Ok(ModeKernel { n, fwd, fwd_carry, bwd, bwd_carry, g1, h1, h2, rs: grid.nodes.clone() })
    }

    pub fn mode(&self) -> u32 {
        self.n
    }

    fn apply<T: Field>(&self, g: &[T]) -> (Vec<T>, Vec<T>) {
        let npts = self.rs.len();
        let ne = (npts - 1) / ORDER;
        let sg: Vec<T> = g.iter().zip(&self.rs).map(|(&v, &r)| v * r).collect();
        let mut a = vec![T::zero(); npts];
        for e in 0..ne {
            let j = e * ORDER;
            for k in 1..=ORDER {
                let row = e * BLOCK + (k - 1) * (ORDER + 1);
                let mut s = a[j] * self.fwd_carry[e * ORDER + k - 1];
                for l in 0..=ORDER {
                    s = s + sg[j + l] * self.fwd[row + l];
                }
                a[j + k] = s;
            }
        }
        let mut b = vec![T::zero(); npts];
        for e in (0..ne).rev() {
            let j = e * ORDER;
            let q = j + ORDER;
            for k in (0..ORDER).rev() {
                let row = e * BLOCK + k * (ORDER + 1);
                let mut s = b[q] * self.bwd_carry[e * ORDER + k];
                for l in 0..=ORDER {
                    s = s + sg[j + l] * self.bwd[row + l];
                }
                b[j + k] = s;
            }
        }
        let nf = self.n as f64;
        let mut f = vec![T::zero(); npts];
        let mut df = vec![T::zero(); npts];
        for i in 0..npts {
            f[i] = (a[i] + b[i]) * (-self.g1[i] / nf);
            df[i] = (a[i] * self.h1[i] - b[i] * self.h2[i]) * (1.0 / self.rs[i]);
        }
        (f, df)
    }

    /// Solves `f'' + f'/r - n² f / r² = g`, `f(r1) = f(r2) = 0`; returns `(f, f')`.
    pub fn solve(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.apply(g)
    }

    pub fn solve_complex(&self, g: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        self.apply(g)
    }
}

/// One-shot modal solve for mode `n ≥ 1` with homogeneous Dirichlet data.
pub fn solve_mode(n: u32, g: &[f64], grid: &RadialGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    if g.len() != grid.len() {
        return Err(Error::Numeric(format!("mode data has {} samples, grid has {}", g.len(), grid.len())));
    }
    Ok(ModeKernel::new(grid, n)?.solve(g))
}

/// Mode-0 solve of `-(ψ'' + ψ'/r) = ω₀` with `ψ(r1) = 0`, `ψ(r2) = γ`; returns `(ψ, ψ')`.
pub fn solve_axisymmetric_samples(grid: &RadialGrid, omega0: &[f64], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let rw: Vec<f64> = grid.nodes.iter().zip(omega0).map(|(r, w)| r * w).collect();
    let rwl: Vec<f64> = grid.nodes.iter().zip(&rw).map(|(r, v)| v * r.ln()).collect();
    let w = grid.cumulative(&rw);
    let v = grid.cumulative(&rwl);
    let r1 = grid.r_min();
    let r2 = grid.r_max();
    let last = grid.len() - 1;
    let c = (gamma + w[last] * r2.ln() - v[last]) / (r2 / r1).ln();
    let mut psi = vec![0.0; grid.len()];
    let mut dpsi = vec![0.0; grid.len()];
    for (i, &r) in grid.nodes.iter().enumerate() {
        psi[i] = c * (r / r1).ln() - w[i] * r.ln() + v[i];
        dpsi[i] = (c - w[i]) / r;
    }
    psi[0] = 0.0;
    psi[last] = gamma;
    (psi, dpsi)
}

/// Mode-0 solve for an axisymmetric vorticity given as a function of r.
pub fn solve_axisymmetric<F: Fn(f64) -> f64>(cfg: &AnnulusConfig, grid: &RadialGrid, omega: F) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = grid.nodes.iter().map(|&r| omega(r)).collect();
    solve_axisymmetric_samples(grid, &w, cfg.circulation())
}

/// Stream function, its radial derivative and its angular derivative on the tensor grid.
#[derive(Clone, Debug)]
pub struct StreamField {
    pub psi: Vec<f64>,
    pub dpsi_dr: Vec<f64>,
    pub dpsi_dtheta: Vec<f64>,
}

/// Full annular Poisson solver on a radial grid times `n_theta` uniform angles.
///
/// Fields are stored row-major by radius: `data[i * n_theta + j]`.
pub struct PoissonSolver {
    pub grid: RadialGrid,
    pub n_theta: usize,
    kernels: Vec<ModeKernel>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pub dealias: bool,
}

impl PoissonSolver {
    pub fn new(grid: RadialGrid, n_theta: usize, exec: Exec) -> Result<PoissonSolver> {
        if n_theta < 4 || n_theta % 2 != 0 {
            return Err(Error::Config(format!("n_theta must be even and at least 4, got {n_theta}")));
        }
        let nmax = n_theta / 2;
        let kernels = par::map_range(exec, nmax, |k| ModeKernel::new(&grid, (k + 1) as u32))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_theta);
        let inv = planner.plan_fft_inverse(n_theta);
        Ok(PoissonSolver { grid, n_theta, kernels, fwd, inv, dealias: false })
    }

    pub fn kernel(&self, n: u32) -> &ModeKernel {
        &self.kernels[n as usize - 1]
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n_theta as f64
    }

    /// Forward transform of each radial row, normalized so that
    /// `v(θ_j) = Σ_n ĉ_n e^{i n θ_j}`.
    pub fn spectrum(&self, field: &[f64], exec: Exec) -> Vec<Complex64> {
        let nt = self.n_theta;
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v / nt as f64, 0.0)).collect();
        let fft = &self.fwd;
        par::for_each_chunk_mut(exec, &mut buf, nt, |_, row| fft.process(row));
        buf
    }

    /// Angular derivative by spectral differentiation.
    pub fn d_theta(&self, field: &[f64], exec: Exec) -> Vec<f64> {
        let nt = self.n_theta;
        let mut spec = self.spectrum(field, exec);
        for row in spec.chunks_mut(nt) {
            for (k, c) in row.iter_mut().enumerate() {
                *c *= Complex64::new(0.0, self.wavenumber(k));
            }
        }
        self.inverse_real(spec, exec)
    }

    fn wavenumber(&self, k: usize) -> f64 {
        let nt = self.n_theta;
        if k < nt / 2 {
            k as f64
        } else if k == nt / 2 {
            0.0
        } else {
            k as f64 - nt as f64
        }
    }

    fn inverse_real(&self, mut spec: Vec<Complex64>, exec: Exec) -> Vec<f64> {
        let inv = &self.inv;
        par::for_each_chunk_mut(exec, &mut spec, self.n_theta, |_, row| inv.process(row));
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Solves `Δ_B ψ = ω` with `ψ(r1, ·) = 0`, `ψ(r2, ·) = γ`.
    pub fn solve_full(&self, omega: &[f64], gamma: f64, exec: Exec) -> Result<StreamField> {
        let nr = self.grid.len();
        let nt = self.n_theta;
        if omega.len() != nr * nt {
            return Err(Error::Numeric(format!("field has {} samples, grid is {nr} x {nt}", omega.len())));
        }
        let spec = self.spectrum(omega, exec);
        let half = nt / 2;
        let cutoff = if self.dealias { nt / 3 } else { half };
        let columns = par::map_range(exec, half + 1, |n| {
            let col: Vec<Complex64> = (0..nr).map(|i| spec[i * nt + n]).collect();
            if n == 0 {
                let re: Vec<f64> = col.iter().map(|c| c.re).collect();
                let (p, d) = solve_axisymmetric_samples(&self.grid, &re, gamma);
                let to_c = |v: Vec<f64>| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
                (to_c(p), to_c(d))
            } else if n > cutoff {
                (vec![Complex64::new(0.0, 0.0); nr], vec![Complex64::new(0.0, 0.0); nr])
            } else {
                let rhs: Vec<Complex64> = col.iter().map(|c| -c).collect();
                self.kernels[n - 1].solve_complex(&rhs)
            }
        });
        let mut sp = vec![Complex64::new(0.0, 0.0); nr * nt];
        let mut sd = sp.clone();
        let mut st = sp.clone();
        for (n, (p, d)) in columns.iter().enumerate() {
            let k = self.wavenumber(n);
            for i in 0..nr {
                let mut pv = p[i];
                let mut dv = d[i];
                if n == half {
                    pv = Complex64::new(pv.re, 0.0);
                    dv = Complex64::new(dv.re, 0.0);
                }
                sp[i * nt + n] = pv;
                sd[i * nt + n] = dv;
                st[i * nt + n] = pv * Complex64::new(0.0, k);
                if n > 0 && n < half {
                    sp[i * nt + nt - n] = pv.conj();
                    sd[i * nt + nt - n] = dv.conj();
                    st[i * nt + nt - n] = (pv * Complex64::new(0.0, k)).conj();
                }
            }
        }
        let mut psi = self.inverse_real(sp, exec);
        let dpsi_dr = self.inverse_real(sd, exec);
        let dpsi_dtheta = self.inverse_real(st, exec);
        for j in 0..nt {
            psi[j] = 0.0;
            psi[(nr - 1) * nt + j] = gamma;
        }
        Ok(StreamField { psi, dpsi_dr, dpsi_dtheta })
    }
}

/// Second-order finite-difference oracle for `f'' + f'/r - n² f / r² = g`,
/// `f(r1) = f(r2) = 0`, on `npts` uniform nodes (tridiagonal solve).
pub fn fd_mode_solve<G: Fn(f64) -> f64>(n: u32, r1: f64, r2: f64, npts: usize, g: G) -> (Vec<f64>, Vec<f64>) {
    let h = (r2 - r1) / (npts - 1) as f64;
    let r: Vec<f64> = (0..npts).map(|i| r1 + h * i as f64).collect();
    let m = npts - 2;
    let nn = (n as f64).powi(2);
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for k in 0..m {
        let x = r[k + 1];
        lower[k] = 1.0 / (h * h) - 1.0 / (2.0 * h * x);
        diag[k] = -2.0 / (h * h) - nn / (x * x);
        upper[k] = 1.0 / (h * h) + 1.0 / (2.0 * h * x);
        rhs[k] = g(x);
    }
    for k in 1..m {
        let w = lower[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    let mut f = vec![0.0; npts];
    f[m] = rhs[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        f[k + 1] = (rhs[k] - upper[k] * f[k + 2]) / diag[k];
    }
    (r, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sn_cn_values_and_addition_law() {
        assert_eq!(sn_cn(5, 1.0).unwrap(), (0.0, 1.0));
        let (s, c) = sn_cn(2, std::f64::consts::E).unwrap();
        assert!((s - 2f64.sinh()).abs() < 1e-14 && (c - 2f64.cosh()).abs() < 1e-14);
        let (x, y) = (1.7, 1.3);
        for n in 1..6 {
            let lhs = sn(n, x / y);
            let rhs = sn(n, x) * cn(n, y) - cn(n, x) * sn(n, y);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }
        assert!(sn_cn(1, -1.0).is_err());
        assert!(sn_cn(600, 3.0).unwrap().0.is_finite());
        assert!(sn_cn(2000, 3.0).unwrap().0.is_infinite());
    }

    #[test]
    fn grid_layout() {
        let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, 1.0).unwrap();
        let g = RadialGrid::for_profile(&cfg, 0.01, &[64, 128, 64, 128, 64]).unwrap();
        assert_eq!(g.len(), 449);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert!(g.nodes.contains(&1.19) && g.nodes.contains(&1.51));
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(RadialGrid::for_profile(&cfg, 0.01, &[60, 128, 64, 128, 64]).is_err());
    }

    #[test]
    fn cumulative_and_interp_are_spectral() {
        let g = RadialGrid::uniform(1.0, 2.0, 64).unwrap();
        let v: Vec<f64> = g.nodes.iter().map(|r| r.exp()).collect();
        let c = g.cumulative(&v);
        for (i, &r) in g.nodes.iter().enumerate() {
            assert!((c[i] - (r.exp() - 1f64.exp())).abs() < 1e-13);
        }
        assert!((g.interp(&v, 1.2345) - 1.2345f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn zero_data_gives_zero_and_linearity() {
        let g = RadialGrid::uniform(1.0, 2.0, 128).unwrap();
        let k = ModeKernel::new(&g, 3).unwrap();
        let (f, _) = k.solve(&vec![0.0; g.len()]);
        assert!(f.iter().all(|&v| v == 0.0));
        let g1: Vec<f64> = g.nodes.iter().map(|r| r.sin()).collect();
        let g2: Vec<f64> = g.nodes.iter().map(|r| (3.0 * r).cos()).collect();
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (f1, _) = k.solve(&g1);
        let (f2, _) = k.solve(&g2);
        let (fm, _) = k.solve(&mix);
        for i in 0..g.len() {
            assert!((fm[i] - (2.0 * f1[i] - 0.5 * f2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn manufactured_mode_solution() {
        let (r1, r2) = (1.0, 2.0);
        let g = RadialGrid::uniform(r1, r2, 512).unwrap();
        let k = PI / (r2 - r1);
        for n in [1u32, 4, 16, 60] {
            let nn = (n as f64).powi(2);
            let rhs: Vec<f64> = g
                .nodes
                .iter()
                .map(|&r| {
                    let s = (k * (r - r1)).sin();
                    let c = (k * (r - r1)).cos();
                    -k * k * s + k * c / r - nn * s / (r * r)
                })
                .collect();
            let (f, df) = solve_mode(n, &rhs, &g).unwrap();
            let mut err = 0.0;
            let mut derr: f64 = 0.0;
            for (i, &r) in g.nodes.iter().enumerate() {
                err += (f[i] - (k * (r - r1)).sin()).powi(2) * g.weights[i];
                derr = derr.max((df[i] - k * (k * (r - r1)).cos()).abs());
            }
            assert!(err.sqrt() < 1e-11, "n={n} err={}", err.sqrt());
            assert!(derr < 1e-9, "n={n} derr={derr}");
            assert_eq!(f[0], 0.0);
            assert_eq!(*f.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn maximum_is_interior_for_sign_definite_data() {
        let g = RadialGrid::uniform(1.0, 2.0, 64).unwrap();
        let (f, _) = solve_mode(2, &vec![1.0; g.len()], &g).unwrap();
        assert!(f.iter().all(|&v| v <= 0.0));
        let imin = f.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(imin > 0 && imin < g.len() - 1);
    }

    #[test]
    fn fd_oracle_converges_to_modal_solution() {
        let g = RadialGrid::uniform(1.0, 2.0, 256).unwrap();
        let gf = |r: f64| r.exp() * (3.0 * r).cos();
        let rhs: Vec<f64> = g.nodes.iter().map(|&r| gf(r)).collect();
        let k = ModeKernel::new(&g, 2).unwrap();
        let (f, _) = k.solve(&rhs);
        let mut errs = Vec::new();
        for npts in [257usize, 513] {
            let (r, fd) = fd_mode_solve(2, 1.0, 2.0, npts, gf);
            let e = r.iter().zip(&fd).map(|(&x, &v)| (g.interp(&f, x) - v).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn full_solve_manufactured_and_axisymmetric() {
        let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.3, 1.0).unwrap();
        let g = RadialGrid::uniform(1.0, 2.0, 256).unwrap();
        let s = PoissonSolver::new(g.clone(), 32, Exec::Sequential).unwrap();
        let nt = 32;
        let (r1, r2) = (1.0, 2.0);
        let mut w = vec![0.0; g.len() * nt];
        for (i, &r) in g.nodes.iter().enumerate() {
            for j in 0..nt {
                let c3 = (3.0 * s.theta(j)).cos();
                let lap = -2.0 + (r1 + r2 - 2.0 * r) / r - 9.0 * (r - r1) * (r2 - r) / (r * r);
                w[i * nt + j] = -lap * c3;
            }
        }
        let sol = s.solve_full(&w, 0.0, Exec::Parallel).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &r) in g.nodes.iter().enumerate() {
            for j in 0..nt {
                let exact = (r - r1) * (r2 - r) * (3.0 * s.theta(j)).cos();
                num += (sol.psi[i * nt + j] - exact).powi(2) * g.weights[i];
                den += exact * exact * g.weights[i];
            }
        }
        assert!((num / den).sqrt() < 1e-12);

        let w: Vec<f64> = vec![2.0 * cfg.A; g.len() * nt];
        let sol = s.solve_full(&w, cfg.circulation(), Exec::Sequential).unwrap();
        for (i, &r) in g.nodes.iter().enumerate() {
            for j in 0..nt {
                assert!((-sol.dpsi_dr[i * nt + j] - cfg.u_tc_unchecked(r)).abs() < 1e-12);
                assert!(sol.dpsi_dtheta[i * nt + j].abs() < 1e-13);
            }
        }
    }
}
