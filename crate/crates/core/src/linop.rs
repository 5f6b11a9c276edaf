// SPDX-License-Identifier: MIT OR Apache-2.0
//! The linearized operator at the trivial solution, rescaled onto the two bands.
//!
//! A band pair `(a, b)` is sampled on the Gauss nodes of [`ZGrid`]. The operator acts as
//! `out_j(z) = Λ_j(z) g_j(z) + ε Σ_i ∫ K_ji(z, t) g_i(t) dt`, where `x_j(z) = R_j + ε z`,
//! `Λ_j = λ x_j² + x_j φ'(x_j)` and
//! `K_ji(z,t) = s_i x_j x_i w_i(t)/n [𝒮(x_j/r1) 𝒮(r2/x_i)/𝒮(r2/r1) - 1_{t<z or i<j} 𝒮(x_j/x_i)]`,
//! with `w_1(t) = φ_κ'(-t)`, `w_2(t) = φ_κ'(t)`, `s_1 = 1`, `s_2 = -1`.
//! The matrix is stored as `diag(Λ) + ε M̄ diag(w)`; `M̄` holds kernel values times
//! quadrature weights, with cumulative Lagrange weights on the Volterra part.

use crate::domain::{AnnulusConfig, BaseFlow};
use crate::poisson::{cn, sn};
use crate::profile::Profile;
use crate::quad::{cumulative_matrix, Barycentric, Rule};
use nalgebra::{DMatrix, DVector};

/// Default number of Gauss nodes on each band.
pub const DEFAULT_Z_NODES: usize = 96;

/// Gauss-Legendre nodes on [-1, 1] with cumulative and interpolation data.
#[derive(Clone, Debug)]
pub struct ZGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cum: DMatrix<f64>,
    pub bary: Barycentric,
}

impl ZGrid {
    pub fn new(n: usize) -> ZGrid {
        let rule = Rule::gauss(n);
        let cum = cumulative_matrix(&rule.nodes);
        let bary = Barycentric::new(&rule.nodes);
        ZGrid { nodes: rule.nodes, weights: rule.weights, cum, bary }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ ω_k f_k.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// `p_i(m) = R_i R2 𝒮ₘ(R_i/r1) 𝒮ₘ(r2/R2) / (m 𝒮ₘ(r2/r1))`, band `i ∈ {1, 2}`.
pub fn p_coeff(i: usize, m: u32, cfg: &AnnulusConfig) -> f64 {
    let ri = if i == 1 { cfg.R1 } else { cfg.R2 };
    ri * cfg.R2 * sn(m, ri / cfg.r1) * sn(m, cfg.r2 / cfg.R2) / (m as f64 * sn(m, cfg.r2 / cfg.r1))
}

/// Coefficients of `Υ^{R_i}(z) = Υ̃₀ + ε Υ̃₁(z) + ε² Υ̃_{ε,κ}(z)` and the derived α's.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub cfg: AnnulusConfig,
    pub profile: Profile,
    pub eps: f64,
    pub lambda0: f64,
    /// Υ̃₀ for bands 1 and 2.
    pub ups0: [f64; 2],
    /// Υ̃₁^{R1}(0).
    pub c1: f64,
    pub j1: f64,
    pub j2: f64,
    pub jl1: f64,
    pub jl2: f64,
    pub m_eps: f64,
    pub remainder: f64,
    rule: Rule,
}

const COEFF_PANELS: usize = 64;

/// Builds the Υ expansion coefficients for a configuration and profile.
pub fn upsilon_terms(profile: &Profile) -> CoefficientSet {
    let cfg = profile.cfg;
    let eps = profile.eps;
    let rule = Rule::gauss(20);
    let (r1b, r2b) = (cfg.R1, cfg.R2);
    let j1 = rule.composite(-1.0, 1.0, COEFF_PANELS, |t| (r1b + eps * t) * profile.phi(-t));
    let j2 = rule.composite(-1.0, 1.0, COEFF_PANELS, |t| (r2b + eps * t) * profile.phi(t));
    let jl1 = rule.composite(-1.0, 1.0, COEFF_PANELS, |t| {
        let x = r1b + eps * t;
        x * profile.phi(-t) * x.ln()
    });
    let jl2 = rule.composite(-1.0, 1.0, COEFF_PANELS, |t| {
        let x = r2b + eps * t;
        x * profile.phi(t) * x.ln()
    });
    let m_eps = rule.composite(0.0, eps, 4, |xi| (r2b - xi) * (r2b - xi).ln() + (r1b + xi) * (r1b + xi).ln()) / eps;
    let l = cfg.log_ratio();
    let lr2 = cfg.r2.ln();
    let remainder = lr2 * (j1 + j2 - (r1b + r2b)) - (jl1 + jl2) + m_eps;
    let c1 = ((r2b * r2b - r1b * r1b) / 2.0 * (lr2 + 0.5) + r1b * r1b / 2.0 * r1b.ln() - r2b * r2b / 2.0 * r2b.ln()) / l;
    let ups0 = [-(cfg.A * r1b * r1b + cfg.B), -(cfg.A * r2b * r2b + cfg.B)];
    CoefficientSet {
        cfg,
        profile: profile.clone(),
        eps,
        lambda0: cfg.lambda0(),
        ups0,
        c1,
        j1,
        j2,
        jl1,
        jl2,
        m_eps,
        remainder,
        rule,
    }
}

impl CoefficientSet {
    fn center(&self, band: usize) -> f64 {
        self.cfg.band_center(band)
    }

    /// Υ̃₁^{R_i}(z) (band index 0 or 1).
    pub fn ups1(&self, band: usize, z: f64) -> f64 {
        let c = &self.cfg;
        let shift = if band == 0 { 0.0 } else { (c.R2 * c.R2 - c.R1 * c.R1) / 2.0 };
        self.c1 - shift - 2.0 * c.A * self.center(band) * z
    }

    /// `∫_{-1}^z (R_i + ε t) φ_κ(∓t) dt`.
    pub fn partial_mass(&self, band: usize, z: f64) -> f64 {
        let panels = ((COEFF_PANELS as f64 * (z + 1.0) / 2.0).ceil() as usize).max(1);
        let r = self.center(band);
        let e = self.eps;
        let p = &self.profile;
        if band == 0 {
            self.rule.composite(-1.0, z, panels, |t| (r + e * t) * p.phi(-t))
        } else {
            self.rule.composite(-1.0, z, panels, |t| (r + e * t) * p.phi(t))
        }
    }

    /// Υ̃^{R_i}_{ε,κ}(z).
    pub fn ups_eps(&self, band: usize, z: f64) -> f64 {
        let c = &self.cfg;
        let base = self.remainder / c.log_ratio() - c.A * z * z;
        if band == 0 {
            base - self.partial_mass(0, z)
        } else {
            base - self.j1 + (c.R1 + c.R2) - self.partial_mass(1, z)
        }
    }

    /// Υ̃₀ + ε Υ̃₁ + ε² Υ̃_{ε,κ}.
    pub fn upsilon_expansion(&self, band: usize, z: f64) -> f64 {
        let e = self.eps;
        self.ups0[band] + e * self.ups1(band, z) + e * e * self.ups_eps(band, z)
    }

    /// α₀^{R_i}[λ₀] = λ₀ R_i² + Υ̃₀.
    pub fn alpha0(&self, band: usize) -> f64 {
        let r = self.center(band);
        self.lambda0 * r * r + self.ups0[band]
    }

    /// α₁^{R_i}[λ₀, λ₁](z) = 2 λ₀ R_i z + λ₁ R_i² + Υ̃₁(z).
    pub fn alpha1(&self, band: usize, lambda1: f64, z: f64) -> f64 {
        let r = self.center(band);
        2.0 * self.lambda0 * r * z + lambda1 * r * r + self.ups1(band, z)
    }

    /// Exact second-order coefficient, so that `Λ = α₀ + ε α₁ + ε² α̂₂` with
    /// `λ = λ₀ + ελ₁ + ε²λ₂`. The `Υ̃_{ε,κ}` part is passed in separately.
    pub fn alpha2_hat(&self, band: usize, lambda1: f64, lambda2: f64, z: f64, ups_eps: f64) -> f64 {
        let r = self.center(band);
        let e = self.eps;
        let x = r + e * z;
        self.lambda0 * z * z + 2.0 * lambda1 * r * z + e * lambda1 * z * z + lambda2 * x * x + ups_eps
    }

    /// Slope of α₁^{R2} in z, equal to 2B/R2.
    pub fn alpha1_slope(&self) -> f64 {
        2.0 * (self.lambda0 - self.cfg.A) * self.cfg.R2
    }

    /// λ* = -(2B/R2 + Υ̃₁^{R2}(0))/R2², where α₁^{R2}(1) vanishes.
    pub fn lambda_star(&self) -> f64 {
        let c = &self.cfg;
        -(2.0 * c.B / c.R2 + self.ups1(1, 0.0)) / (c.R2 * c.R2)
    }

    /// Supremum of λ₁ for which α₁^{R2} keeps one sign on [-1, 1].
    pub fn lambda_edge(&self) -> f64 {
        let c = &self.cfg;
        let k = 2.0 * c.B / c.R2;
        let u = self.ups1(1, 0.0);
        (-(k + u) / (c.R2 * c.R2)).min(-(-k + u) / (c.R2 * c.R2))
    }
}

/// Everything needed to assemble band operators for one `(cfg, ε, κ)`.
#[derive(Clone, Debug)]
pub struct BandSetup {
    pub cfg: AnnulusConfig,
    pub profile: Profile,
    pub zgrid: ZGrid,
    pub coeffs: CoefficientSet,
    pub eps: f64,
    /// Direct Υ(x_j(z_k)) = x φ'(x) on both bands.
    pub ups: [Vec<f64>; 2],
    /// w_1(t) = φ_κ'(-t), w_2(t) = φ_κ'(t) at the nodes.
    pub w: [Vec<f64>; 2],
    /// σ₋ and σ₊ at the nodes.
    pub sigma: [Vec<f64>; 2],
}

impl BandSetup {
    pub fn new(profile: &Profile, zgrid: ZGrid) -> BandSetup {
        let cfg = profile.cfg;
        let eps = profile.eps;
        let bf = BaseFlow::new(profile);
        let coeffs = upsilon_terms(profile);
        let ups = [0, 1].map(|j| zgrid.nodes.iter().map(|&z| bf.upsilon(cfg.band_center(j) + eps * z)).collect());
        let w = [
            zgrid.nodes.iter().map(|&t| profile.dphi(-t)).collect(),
            zgrid.nodes.iter().map(|&t| profile.dphi(t)).collect(),
        ];
        let sigma = [
            zgrid.nodes.iter().map(|&z| profile.sigma_minus(z)).collect(),
            zgrid.nodes.iter().map(|&z| profile.sigma_plus(z)).collect(),
        ];
        BandSetup { cfg, profile: profile.clone(), zgrid, coeffs, eps, ups, w, sigma }
    }

    pub fn nz(&self) -> usize {
        self.zgrid.len()
    }

    pub fn x(&self, band: usize, z: f64) -> f64 {
        self.cfg.band_center(band) + self.eps * z
    }

    /// Column factors `w` for a stacked `(band 1, band 2)` vector.
    pub fn stacked_w(&self) -> Vec<f64> {
        self.w[0].iter().chain(&self.w[1]).copied().collect()
    }

    fn range_weight(&self, j: usize, i: usize, k: usize, l: usize) -> f64 {
        match (j, i) {
            (1, 0) => self.zgrid.weights[l],
            (0, 1) => 0.0,
            _ => self.zgrid.cum[(k, l)],
        }
    }

    /// Block `M̄_ji` at band half-width `delta`.
    pub fn mbar_block(&self, n: u32, delta: f64, j: usize, i: usize) -> DMatrix<f64> {
        let c = &self.cfg;
        let nz = self.nz();
        let sign = if i == 0 { 1.0 } else { -1.0 };
        let str_ = sn(n, c.r2 / c.r1);
        let (rj, ri) = (c.band_center(j), c.band_center(i));
        let nf = n as f64;
        DMatrix::from_fn(nz, nz, |k, l| {
            let xj = rj + delta * self.zgrid.nodes[k];
            let xi = ri + delta * self.zgrid.nodes[l];
            let full = sn(n, xj / c.r1) * sn(n, c.r2 / xi) / str_;
            let rw = self.range_weight(j, i, k, l);
            let direct = if rw != 0.0 { rw * sn(n, xj / xi) } else { 0.0 };
            sign * xj * xi / nf * (self.zgrid.weights[l] * full - direct)
        })
    }

    /// `∂_δ M̄_ji` at band half-width `delta`.
    pub fn dmbar_block(&self, n: u32, delta: f64, j: usize, i: usize) -> DMatrix<f64> {
        let c = &self.cfg;
        let nz = self.nz();
        let sign = if i == 0 { 1.0 } else { -1.0 };
        let str_ = sn(n, c.r2 / c.r1);
        let (rj, ri) = (c.band_center(j), c.band_center(i));
        let nf = n as f64;
        DMatrix::from_fn(nz, nz, |k, l| {
            let z = self.zgrid.nodes[k];
            let t = self.zgrid.nodes[l];
            let xj = rj + delta * z;
            let xi = ri + delta * t;
            let full = sn(n, xj / c.r1) * sn(n, c.r2 / xi) / str_;
            let dfull = (nf * cn(n, xj / c.r1) * z / xj * sn(n, c.r2 / xi)
                - sn(n, xj / c.r1) * nf * cn(n, c.r2 / xi) * t / xi)
                / str_;
            let rw = self.range_weight(j, i, k, l);
            let (direct, ddirect) = if rw != 0.0 {
                (rw * sn(n, xj / xi), rw * nf * cn(n, xj / xi) * (z / xj - t / xi))
            } else {
                (0.0, 0.0)
            };
            let om = self.zgrid.weights[l];
            sign / nf * ((z * xi + xj * t) * (om * full - direct) + xj * xi * (om * dfull - ddirect))
        })
    }

    /// `(1/ε) ∫_0^ε ∂_δ M̄_ji dδ` by Gauss quadrature in δ.
    pub fn dbar_block(&self, n: u32, j: usize, i: usize) -> DMatrix<f64> {
        let rule = Rule::gauss(8);
        let nz = self.nz();
        let mut acc = DMatrix::zeros(nz, nz);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let delta = 0.5 * self.eps * (x + 1.0);
            acc += self.dmbar_block(n, delta, j, i) * (0.5 * w);
        }
        acc
    }

    /// Diagonal `Λ_j(z_k) = λ x_j² + Υ_j(z_k)` on both bands.
    pub fn lambda_diag(&self, lambda: f64) -> Vec<f64> {
        let mut d = Vec::with_capacity(2 * self.nz());
        for j in 0..2 {
            for (k, &z) in self.zgrid.nodes.iter().enumerate() {
                let x = self.x(j, z);
                d.push(lambda * x * x + self.ups[j][k]);
            }
        }
        d
    }

    /// Band operator for mode `n` at frequency `λ`.
    pub fn assemble(&self, n: u32, lambda: f64) -> BandOperator {
        let nz = self.nz();
        let mut mbar = DMatrix::zeros(2 * nz, 2 * nz);
        for j in 0..2 {
            for i in 0..2 {
                let b = self.mbar_block(n, self.eps, j, i);
                mbar.view_mut((j * nz, i * nz), (nz, nz)).copy_from(&b);
            }
        }
        BandOperator {
            n,
            eps: self.eps,
            lambda,
            diag: self.lambda_diag(lambda),
            mbar,
            w: self.stacked_w(),
            quad_w: self.zgrid.weights.iter().chain(&self.zgrid.weights).copied().collect(),
        }
    }

    /// Adjoint band operator with respect to [`BandSetup::inner`].
    pub fn assemble_adjoint(&self, n: u32, lambda: f64) -> BandOperator {
        self.assemble(n, lambda).adjoint()
    }

    /// Weighted pairing `Σ ω σ₋ u_1 v_1 + Σ ω σ₊ u_2 v_2` of stacked vectors.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let nz = self.nz();
        let mut s = 0.0;
        for j in 0..2 {
            for k in 0..nz {
                s += self.zgrid.weights[k] * self.sigma[j][k] * u[j * nz + k] * v[j * nz + k];
            }
        }
        s
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Plain L² pairing `Σ ω u v` of stacked vectors.
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let nz = self.nz();
        (0..2 * nz).map(|q| self.zgrid.weights[q % nz] * u[q] * v[q]).sum()
    }
}

/// Dense band operator `diag(Λ) + ε M̄ diag(w)` on stacked `(band 1, band 2)` samples.
#[derive(Clone, Debug)]
pub struct BandOperator {
    pub n: u32,
    pub eps: f64,
    pub lambda: f64,
    pub diag: Vec<f64>,
    pub mbar: DMatrix<f64>,
    pub w: Vec<f64>,
    quad_w: Vec<f64>,
}

impl BandOperator {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::from_fn(n, n, |r, c| self.eps * self.mbar[(r, c)] * self.w[c]);
        for (q, d) in self.diag.iter().enumerate() {
            m[(q, q)] += d;
        }
        m
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let wu = DVector::from_iterator(u.len(), u.iter().zip(&self.w).map(|(a, b)| a * b));
        let k = &self.mbar * wu;
        (0..u.len()).map(|q| self.diag[q] * u[q] + self.eps * k[q]).collect()
    }

    /// Adjoint in the σ-weighted pairing: `M̄* = D_ω⁻¹ M̄ᵀ D_ω`, same diagonal and column factors.
    pub fn adjoint(&self) -> BandOperator {
        let n = self.size();
        let q = &self.quad_w;
        let mbar = DMatrix::from_fn(n, n, |r, c| self.mbar[(c, r)] * q[c] / q[r]);
        BandOperator { mbar, ..self.clone() }
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let m = self.matrix();
        let mut out = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    out.push((r, c, m[(r, c)]));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(b: f64, eps: f64) -> BandSetup {
        let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, b).unwrap();
        let p = Profile::new(cfg, eps, 0.1).unwrap();
        BandSetup::new(&p, ZGrid::new(48))
    }

    #[test]
    fn p_coeff_examples() {
        let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, 1.0).unwrap();
        assert!((p_coeff(2, 1, &cfg) - 0.3645833333333333).abs() < 1e-12);
        let ps: Vec<f64> = (1..=20).map(|m| p_coeff(2, m, &cfg)).collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]));
        for m in 1..=5 {
            let ratio = p_coeff(1, m, &cfg) / p_coeff(2, m, &cfg);
            let direct = cfg.R1 * sn(m, cfg.R1 / cfg.r1) / (cfg.R2 * sn(m, cfg.R2 / cfg.r1));
            assert!((ratio - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn coefficient_identities() {
        let s = setup(1.0, 0.01);
        let c = &s.coeffs;
        assert_eq!(c.ups0, [-1.0, -1.0]);
        assert!((c.alpha0(0) - (1.44 - 2.25) / 2.25).abs() < 1e-14);
        assert!(c.alpha0(1).abs() < 1e-14);
        let shift = (1.5f64.powi(2) - 1.2f64.powi(2)) / 2.0;
        assert!((c.ups1(1, 0.0) - (c.ups1(0, 0.0) - shift)).abs() < 1e-14);
        assert!(c.alpha1(1, c.lambda_star(), 1.0).abs() < 1e-12);
        assert!((c.alpha1(1, 0.3, 0.5) - c.alpha1(1, 0.3, -0.5) - c.alpha1_slope()).abs() < 1e-13);
        assert!((c.alpha1_slope() - 2.0 / 1.5).abs() < 1e-13);
    }

    #[test]
    fn expansion_matches_direct_upsilon() {
        for eps in [0.01, 0.02] {
            let s = setup(1.0, eps);
            for j in 0..2 {
                for (k, &z) in s.zgrid.nodes.iter().enumerate().step_by(7) {
                    let d = s.ups[j][k] - s.coeffs.upsilon_expansion(j, z);
                    assert!(d.abs() < 1e-12, "band {j} z {z}: {d}");
                }
            }
        }
    }

    #[test]
    fn zero_input_and_duality() {
        let s = setup(0.1, 0.01);
        let op = s.assemble(2, 0.05);
        let nz = s.nz();
        assert!(op.apply(&vec![0.0; 2 * nz]).iter().all(|&v| v == 0.0));
        let adj = op.adjoint();
        let u: Vec<f64> = (0..2 * nz).map(|q| ((q * 7 % 13) as f64 - 6.0) / 6.0).collect();
        let v: Vec<f64> = (0..2 * nz).map(|q| ((q * 5 % 11) as f64 - 5.0) / 5.0).collect();
        let lhs = s.inner(&op.apply(&u), &v);
        let rhs = s.inner(&u, &adj.apply(&v));
        assert!((lhs - rhs).abs() < 1e-13 * s.norm(&u) * s.norm(&v));
        let back = adj.adjoint();
        assert!((back.matrix() - op.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn delta_derivative_matches_difference_quotient() {
        let s = setup(0.1, 0.01);
        for (j, i) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let d = s.dbar_block(3, j, i);
            let diff = (s.mbar_block(3, s.eps, j, i) - s.mbar_block(3, 0.0, j, i)) / s.eps;
            assert!((d - diff).abs().max() < 1e-10, "block {j}{i}");
            let h = 1e-6;
            let fd = (s.mbar_block(3, 0.005 + h, j, i) - s.mbar_block(3, 0.005 - h, j, i)) / (2.0 * h);
            assert!((s.dmbar_block(3, 0.005, j, i) - fd).abs().max() < 1e-7);
        }
    }

    #[test]
    fn small_delta_coupling_is_rank_one() {
        let s = setup(1.0, 0.01);
        let m = 2;
        let p1 = p_coeff(1, m, &s.cfg);
        let p2 = p_coeff(2, m, &s.cfg);
        let k21 = s.mbar_block(m, 1e-8, 1, 0);
        let k12 = s.mbar_block(m, 1e-8, 0, 1);
        let k22 = s.mbar_block(m, 1e-8, 1, 1);
        for k in 0..s.nz() {
            for l in 0..s.nz() {
                let om = s.zgrid.weights[l];
                assert!((k21[(k, l)] - p1 * om).abs() < 1e-7);
                assert!((k12[(k, l)] + p1 * om).abs() < 1e-7);
                assert!((k22[(k, l)] + p2 * om).abs() < 1e-7);
            }
        }
    }
}
