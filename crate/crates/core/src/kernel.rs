// SPDX-License-Identifier: MIT OR Apache-2.0
//! Kernel of the band operator: λ₁ root, leading profiles, fixed-point corrections,
//! SVD validation, adjoint kernel and transversality.
//!
//! The corrections are computed for the discretized operator itself, so the converged
//! pair is an exact null vector of the assembled matrix up to rounding.

use crate::error::{Error, Result};
use crate::linop::{p_coeff, BandSetup};
use crate::par::{self, Exec};
use nalgebra::{DMatrix, DVector};

const BISECTION_CAP: usize = 200;

/// λ* = -(2B/R2 + Υ̃₁^{R2}(0))/R2².
pub fn lambda_star(setup: &BandSetup) -> f64 {
    setup.coeffs.lambda_star()
}

/// `I(λ̃) = p₂(m) Σ ω φ_κ' / α₁^{R2}[λ₀, λ̃]` on the z-grid.
pub fn i_of_lambda(setup: &BandSetup, m: u32, lam: f64) -> f64 {
    let p2 = p_coeff(2, m, &setup.cfg);
    let c = &setup.coeffs;
    let z = &setup.zgrid;
    p2 * (0..z.len()).map(|k| z.weights[k] * setup.w[1][k] / c.alpha1(1, lam, z.nodes[k])).sum::<f64>()
}

/// Value of `I` just below the feasible edge, i.e. its supremum.
pub fn lambda1_supremum(setup: &BandSetup, m: u32) -> f64 {
    let edge = setup.coeffs.lambda_edge();
    i_of_lambda(setup, m, edge - 1e-13 * edge.abs().max(1.0))
}

#[derive(Clone, Debug)]
pub struct Lambda1Root {
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
    pub edge: f64,
}

/// Unique λ₁ below the feasible edge with `I(λ₁) = 1`, by bisection.
pub fn solve_lambda1(setup: &BandSetup, m: u32) -> Result<Lambda1Root> {
    let edge = setup.coeffs.lambda_edge();
    let scale = edge.abs().max(1.0);
    let sup = lambda1_supremum(setup, m);
    if !(sup > 1.0) {
        return Err(Error::Numeric(format!(
            "no lambda1 root for m={m}: sup I = {sup:.6} <= 1 below the edge {edge:.6} (kappa or B too large for this geometry)"
        )));
    }
    let mut delta = scale;
    while i_of_lambda(setup, m, edge - delta) <= 1.0 {
        delta *= 0.5;
        if delta < 1e-14 * scale {
            return Err(Error::Numeric(format!("lambda1 upper bracket not found for m={m}")));
        }
    }
    let mut hi = edge - delta;
    let mut big = scale;
    while i_of_lambda(setup, m, edge - big) >= 1.0 {
        big *= 2.0;
        if big > 1e12 * scale {
            return Err(Error::Numeric(format!("lambda1 lower bracket not found for m={m}")));
        }
    }
    let mut lo = edge - big;
    let mut iterations = 0;
    let mut mid = 0.5 * (lo + hi);
    while iterations < BISECTION_CAP {
        iterations += 1;
        mid = 0.5 * (lo + hi);
        let v = i_of_lambda(setup, m, mid);
        if (v - 1.0).abs() <= 1e-14 || mid == lo || mid == hi {
            break;
        }
        if v > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let residual = (i_of_lambda(setup, m, mid) - 1.0).abs();
    Ok(Lambda1Root { lambda1: mid, residual, iterations, edge })
}

/// Leading-order λ₁ from the flat-edge approximation φ_κ' ≈ -1/2:
/// `λ₁ ≈ (-k coth(k/p₂) - Υ̃₁^{R2}(0))/R2²` with `k = 2B/R2`.
pub fn lambda1_closed_form(setup: &BandSetup, m: u32) -> f64 {
    let c = &setup.cfg;
    let k = 2.0 * c.B / c.R2;
    let p2 = p_coeff(2, m, c);
    (-k / (k / p2).tanh() - setup.coeffs.ups1(1, 0.0)) / (c.R2 * c.R2)
}

/// `(b₀, a₁)` with `b₀ = 1/α₁^{R2}` on the z-grid and `a₁ = p₁ ∫φ_κ' b₀ / α₀^{R1}`.
pub fn b0_and_a1(setup: &BandSetup, m: u32, lambda1: f64) -> Result<(Vec<f64>, f64)> {
    let c = &setup.coeffs;
    let z = &setup.zgrid;
    let alpha: Vec<f64> = z.nodes.iter().map(|&t| c.alpha1(1, lambda1, t)).collect();
    let sign = alpha[0].signum();
    if alpha.iter().any(|&a| a == 0.0 || a.signum() != sign) {
        return Err(Error::Validation("alpha1^{R2} changes sign on the band".into()));
    }
    let b0: Vec<f64> = alpha.iter().map(|a| 1.0 / a).collect();
    let mass: f64 = (0..z.len()).map(|k| z.weights[k] * setup.w[1][k] * b0[k]).sum();
    let a1 = p_coeff(1, m, &setup.cfg) * mass / c.alpha0(0);
    Ok((b0, a1))
}

/// Solves `α₁^{R2} g - p₂ ∫φ_κ' g + μ R2² b₀ = G` with `∫φ_κ' g = 0`.
pub fn invert_q2hat(setup: &BandSetup, b0: &[f64], g: &[f64]) -> Result<(Vec<f64>, f64)> {
    let z = &setup.zgrid;
    let r2 = setup.cfg.R2;
    let den: f64 = (0..z.len()).map(|k| z.weights[k] * setup.w[1][k] * b0[k] * b0[k]).sum::<f64>() * r2 * r2;
    if den.abs() < 1e-300 {
        return Err(Error::Validation("degenerate denominator in the Q2 inversion".into()));
    }
    let num: f64 = (0..z.len()).map(|k| z.weights[k] * setup.w[1][k] * g[k] * b0[k]).sum();
    let mu = num / den;
    let out = (0..z.len()).map(|k| (g[k] - mu * r2 * r2 * b0[k]) * b0[k]).collect();
    Ok((out, mu))
}

/// Kernel element `a = ε a₁ + ε² a₂`, `b = b₀ + ε b₁`, `λ = λ₀ + ελ₁ + ε²λ₂`.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub m: u32,
    pub eps: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda1_residual: f64,
    pub a1: f64,
    pub b0: Vec<f64>,
    pub a2: Vec<f64>,
    pub b1: Vec<f64>,
    /// Successive-iterate distances of the fixed-point map.
    pub distances: Vec<f64>,
    /// Iterates `(λ₂, a₂, b₁)` in order; the first entry is the first iterate.
    pub first_iterate: (f64, Vec<f64>, Vec<f64>),
}

impl EigenSolution {
    pub fn lambda(&self) -> f64 {
        self.lambda0 + self.eps * self.lambda1 + self.eps * self.eps * self.lambda2
    }

    fn stack(&self, a2: &[f64], b1: &[f64]) -> Vec<f64> {
        let e = self.eps;
        let a = a2.iter().map(|v| e * self.a1 + e * e * v);
        let b = self.b0.iter().zip(b1).map(|(b0, b1)| b0 + e * b1);
        a.chain(b).collect()
    }

    /// Stacked samples `(a, b)` of the converged kernel element.
    pub fn stacked(&self) -> Vec<f64> {
        self.stack(&self.a2, &self.b1)
    }

    /// Zeroth iterate `(ε a₁, b₀)` at `λ₀ + ελ₁`.
    pub fn zeroth(&self) -> (f64, Vec<f64>) {
        let nz = self.b0.len();
        (self.lambda0 + self.eps * self.lambda1, self.stack(&vec![0.0; nz], &vec![0.0; nz]))
    }

    /// First Picard iterate and its frequency.
    pub fn first(&self) -> (f64, Vec<f64>) {
        let (l2, a2, b1) = &self.first_iterate;
        let e = self.eps;
        (self.lambda0 + e * self.lambda1 + e * e * l2, self.stack(a2, b1))
    }

    /// Geometric contraction ratio estimated from the tail of the distance sequence.
    pub fn contraction_ratio(&self) -> f64 {
        let d = &self.distances;
        let usable: Vec<f64> = d.iter().copied().filter(|&v| v > 1e-13).collect();
        if usable.len() < 3 {
            return 0.0;
        }
        let k = usable.len();
        let lo = 1.min(k - 2);
        (usable[k - 1] / usable[lo]).powf(1.0 / (k - 1 - lo) as f64)
    }
}

/// Tolerance on successive-iterate distances.
pub const FIXED_POINT_TOL: f64 = 1e-11;

/// Full construction: λ₁ root, `(b₀, a₁)`, and fixed-point corrections.
pub fn construct(setup: &BandSetup, m: u32) -> Result<EigenSolution> {
    let root = solve_lambda1(setup, m)?;
    let (b0, a1) = b0_and_a1(setup, m, root.lambda1)?;
    fixed_point_corrections(setup, m, root.lambda1, root.residual, a1, b0)
}

fn l2(setup: &BandSetup, v: &[f64]) -> f64 {
    setup.zgrid.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}

fn apply_block(mat: &DMatrix<f64>, w: &[f64], g: &[f64]) -> Vec<f64> {
    let v = DVector::from_iterator(g.len(), g.iter().zip(w).map(|(a, b)| a * b));
    (mat * v).iter().copied().collect()
}

/// Picard iteration for `(a₂, b₁, λ₂)` from the zero initial guess.
pub fn fixed_point_corrections(
    setup: &BandSetup,
    m: u32,
    lambda1: f64,
    lambda1_residual: f64,
    a1: f64,
    b0: Vec<f64>,
) -> Result<EigenSolution> {
    let e = setup.eps;
    let nz = setup.nz();
    let zs = &setup.zgrid.nodes;
    let cf = &setup.coeffs;
    let cfg = &setup.cfg;
    let (w1, w2) = (&setup.w[0], &setup.w[1]);
    let p1 = p_coeff(1, m, cfg);
    let p2 = p_coeff(2, m, cfg);
    let k11 = setup.mbar_block(m, e, 0, 0);
    let k21 = setup.mbar_block(m, e, 1, 0);
    let d12 = setup.dbar_block(m, 0, 1);
    let d22 = setup.dbar_block(m, 1, 1);
    let ups_eps: [Vec<f64>; 2] = [0, 1].map(|j| {
        (0..nz).map(|k| (setup.ups[j][k] - cf.ups0[j] - e * cf.ups1(j, zs[k])) / (e * e)).collect()
    });
    let al1: [Vec<f64>; 2] = [0, 1].map(|j| zs.iter().map(|&z| cf.alpha1(j, lambda1, z)).collect());
    let alpha0 = cf.alpha0(0);
    let r2 = cfg.R2;
    let phi_int = |v: &[f64]| setup.zgrid.integrate(&v.iter().zip(w2).map(|(a, b)| a * b).collect::<Vec<_>>());
    let base_res: Vec<f64> = {
        let s = p2 * phi_int(&b0);
        (0..nz).map(|k| al1[1][k] * b0[k] - s).collect()
    };

    let mut a2 = vec![0.0; nz];
    let mut b1 = vec![0.0; nz];
    let mut l2v = 0.0;
    let mut distances = Vec::new();
    let mut first = None;
    let mut growth = 0;
    for _ in 0..500 {
        let ahat: [Vec<f64>; 2] = [0, 1].map(|j| (0..nz).map(|k| cf.alpha2_hat(j, lambda1, l2v, zs[k], ups_eps[j][k])).collect());
        let a_full: Vec<f64> = a2.iter().map(|v| a1 + e * v).collect();
        let b_full: Vec<f64> = (0..nz).map(|k| b0[k] + e * b1[k]).collect();
        let k21a = apply_block(&k21, w1, &a_full);
        let d22b = apply_block(&d22, w2, &b_full);
        let g: Vec<f64> = (0..nz)
            .map(|k| {
                -(base_res[k] / e
                    + (ahat[1][k] - l2v * r2 * r2) * b0[k]
                    + e * ahat[1][k] * b1[k]
                    + d22b[k]
                    + k21a[k])
            })
            .collect();
        let (b1n, mu) = invert_q2hat(setup, &b0, &g)?;
        let b_new: Vec<f64> = (0..nz).map(|k| b0[k] + e * b1n[k]).collect();
        let d12b = apply_block(&d12, w2, &b_new);
        let k11a = apply_block(&k11, w1, &a_full);
        let coupling = p1 * phi_int(&b1n) - p1 * (phi_int(&b0) - phi_int(&b0));
        let a2n: Vec<f64> = (0..nz)
            .map(|k| (coupling - (al1[0][k] + e * ahat[0][k]) * a_full[k] - k11a[k] - d12b[k]) / alpha0)
            .collect();
        let da: Vec<f64> = a2n.iter().zip(&a2).map(|(x, y)| x - y).collect();
        let db: Vec<f64> = b1n.iter().zip(&b1).map(|(x, y)| x - y).collect();
        let dist = l2(setup, &da) + l2(setup, &db) + (mu - l2v).abs();
        a2 = a2n;
        b1 = b1n;
        l2v = mu;
        if first.is_none() {
            first = Some((l2v, a2.clone(), b1.clone()));
        }
        if let Some(&prev) = distances.last() {
            if dist > prev {
                growth += 1;
            } else {
                growth = 0;
            }
        }
        distances.push(dist);
        if growth >= 3 {
            let k = distances.len();
            let lip = distances[k - 1] / distances[k - 2];
            return Err(Error::Validation(format!(
                "fixed-point map is not contracting at eps={e} (measured Lipschitz ratio {lip:.3}); reduce eps"
            )));
        }
        if dist <= FIXED_POINT_TOL {
            break;
        }
    }
    if *distances.last().unwrap() > FIXED_POINT_TOL {
        return Err(Error::Validation(format!("fixed point did not converge at eps={e}")));
    }
    Ok(EigenSolution {
        m,
        eps: e,
        lambda0: cf.lambda0,
        lambda1,
        lambda2: l2v,
        lambda1_residual,
        a1,
        b0,
        a2,
        b1,
        distances,
        first_iterate: first.unwrap(),
    })
}

/// Singular values (descending) and the right singular vector of the smallest one.
pub fn svd_null(mat: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let svd = mat.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let imin = sv.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let null = vt.row(imin).iter().copied().collect();
    let mut sorted = sv;
    sorted.sort_by(|a, b| b.total_cmp(a));
    (sorted, null)
}

#[derive(Clone, Debug)]
pub struct ModeCheck {
    pub n: u32,
    pub sigma_min: f64,
    pub norm: f64,
}

impl ModeCheck {
    /// "No kernel" threshold: σ_min ≥ 1e-3 ε ‖ℒₙ‖.
    pub fn nonsingular(&self, eps: f64) -> bool {
        self.sigma_min >= 1e-3 * eps * self.norm
    }
}

#[derive(Clone, Debug)]
pub struct KernelDiagnostics {
    pub sigma_min: f64,
    pub sigma_second: f64,
    pub cosine: f64,
    pub residual: f64,
    pub residual_first: f64,
    pub residual_zeroth: f64,
    pub perturbed_sigma_min: f64,
    pub others: Vec<ModeCheck>,
}

impl KernelDiagnostics {
    pub fn gap_ratio(&self) -> f64 {
        self.sigma_min / self.sigma_second
    }

    pub fn check(&self, eps: f64) -> Result<()> {
        if self.gap_ratio() > 1e-6 {
            return Err(Error::Validation(format!("no clear rank-1 deficiency: ratio {:.3e}", self.gap_ratio())));
        }
        if self.cosine < 1.0 - 1e-4 {
            return Err(Error::Validation(format!("null vector mismatch: cosine {}", self.cosine)));
        }
        if let Some(bad) = self.others.iter().find(|c| !c.nonsingular(eps)) {
            return Err(Error::Validation(format!("mode {} is nearly singular: sigma_min {:.3e}", bad.n, bad.sigma_min)));
        }
        Ok(())
    }
}

/// SVD checks of the constructed kernel, plus uniqueness in the other modes `1..=max_mode`.
pub fn validate_kernel(setup: &BandSetup, eig: &EigenSolution, max_mode: u32, exec: Exec) -> KernelDiagnostics {
    let lam = eig.lambda();
    let op = setup.assemble(eig.m, lam);
    let (sv, null) = svd_null(&op.matrix());
    let h = eig.stacked();
    let dot = setup.l2_inner(&null, &h);
    let cosine = dot.abs() / (setup.l2_inner(&null, &null).sqrt() * setup.l2_inner(&h, &h).sqrt());
    let resid = |lam: f64, v: &[f64]| {
        let out = setup.assemble(eig.m, lam).apply(v);
        setup.l2_inner(&out, &out).sqrt()
    };
    let (l1, v1) = eig.first();
    let (l0, v0) = eig.zeroth();
    let residual = resid(lam, &h);
    let residual_first = resid(l1, &v1);
    let residual_zeroth = resid(l0, &v0);
    let (svp, _) = svd_null(&setup.assemble(eig.m, lam + 0.1).matrix());
    let modes: Vec<u32> = (1..=max_mode).filter(|&n| n != eig.m).collect();
    let others = par::map_range(exec, modes.len(), |q| {
        let n = modes[q];
        let s = svd_null(&setup.assemble(n, lam).matrix()).0;
        ModeCheck { n, sigma_min: *s.last().unwrap(), norm: s[0] }
    });
    KernelDiagnostics {
        sigma_min: *sv.last().unwrap(),
        sigma_second: sv[sv.len() - 2],
        cosine,
        residual,
        residual_first,
        residual_zeroth,
        perturbed_sigma_min: *svp.last().unwrap(),
        others,
    }
}

#[derive(Clone, Debug)]
pub struct AdjointKernel {
    /// Stacked `(a*, b*)`, unit weighted norm, `⟨b*, b₀⟩ > 0`.
    pub stacked: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_second: f64,
    /// `C = ⟨b*, b₀⟩/⟨b₀, b₀⟩` in the σ₊ pairing.
    pub c: f64,
    pub a_norm: f64,
    pub b_defect: f64,
}

fn band_inner(setup: &BandSetup, band: usize, u: &[f64], v: &[f64]) -> f64 {
    let z = &setup.zgrid;
    (0..z.len()).map(|k| z.weights[k] * setup.sigma[band][k] * u[k] * v[k]).sum()
}

/// Null vector of the adjoint operator and its expansion diagnostics.
pub fn adjoint_kernel(setup: &BandSetup, eig: &EigenSolution) -> Result<AdjointKernel> {
    let nz = setup.nz();
    let adj = setup.assemble_adjoint(eig.m, eig.lambda());
    let (sv, mut v) = svd_null(&adj.matrix());
    let sigma_min = *sv.last().unwrap();
    let sigma_second = sv[sv.len() - 2];
    if sigma_min > 1e-6 * sigma_second {
        return Err(Error::Validation(format!(
            "adjoint kernel is not one-dimensional: sigma_min/sigma_second = {:.3e}",
            sigma_min / sigma_second
        )));
    }
    let nrm = setup.norm(&v);
    v.iter_mut().for_each(|x| *x /= nrm);
    if band_inner(setup, 1, &v[nz..], &eig.b0) < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let bstar = &v[nz..];
    let c = band_inner(setup, 1, bstar, &eig.b0) / band_inner(setup, 1, &eig.b0, &eig.b0);
    let a_norm = band_inner(setup, 0, &v[..nz], &v[..nz]).sqrt();
    let defect: Vec<f64> = (0..nz).map(|k| bstar[k] - c * eig.b0[k]).collect();
    let b_defect = band_inner(setup, 1, &defect, &defect).sqrt();
    Ok(AdjointKernel { stacked: v, sigma_min, sigma_second, c, a_norm, b_defect })
}

#[derive(Clone, Debug)]
pub struct Transversality {
    pub t: f64,
    pub band1: f64,
    pub band2: f64,
    /// `∫(R2 + εz) b₀² σ₊`.
    pub leading: f64,
}

/// Pairing of the kernel with the adjoint kernel, rescaled so that `C = 1`.
pub fn transversality(setup: &BandSetup, eig: &EigenSolution, adj: &AdjointKernel) -> Transversality {
    let nz = setup.nz();
    let h = eig.stacked();
    let z = &setup.zgrid;
    let mut band = [0.0; 2];
    for (j, acc) in band.iter_mut().enumerate() {
        for k in 0..nz {
            let x = setup.x(j, z.nodes[k]);
            *acc += z.weights[k] * x * h[j * nz + k] * adj.stacked[j * nz + k] * setup.sigma[j][k];
        }
        *acc /= adj.c;
    }
    let leading = (0..nz).map(|k| z.weights[k] * setup.x(1, z.nodes[k]) * eig.b0[k].powi(2) * setup.sigma[1][k]).sum();
    Transversality { t: band[0] + band[1], band1: band[0], band2: band[1], leading }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AnnulusConfig;
    use crate::linop::ZGrid;
    use crate::profile::Profile;

    fn setup(b: f64, eps: f64, kappa: f64) -> BandSetup {
        let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, b).unwrap();
        BandSetup::new(&Profile::new(cfg, eps, kappa).unwrap(), ZGrid::new(64))
    }

    #[test]
    fn lambda_star_zeroes_alpha1_at_the_edge() {
        let s = setup(1.0, 0.01, 0.1);
        assert!(s.coeffs.alpha1(1, lambda_star(&s), 1.0).abs() < 1e-12);
        assert_eq!(s.coeffs.lambda_edge(), lambda_star(&s));
    }

    #[test]
    fn default_config_has_no_root() {
        let s = setup(1.0, 0.01, 0.1);
        let sup = lambda1_supremum(&s, 1);
        assert!(sup < 1.0, "sup = {sup}");
        assert!(solve_lambda1(&s, 1).is_err());
    }

    #[test]
    fn root_monotonicity_and_tail() {
        let s = setup(0.1, 0.01, 0.1);
        let root = solve_lambda1(&s, 1).unwrap();
        assert!(root.residual <= 1e-10);
        assert!(root.lambda1 < lambda_star(&s));
        let ls = lambda_star(&s);
        let vals: Vec<f64> = (1..40).map(|k| i_of_lambda(&s, 1, ls - 2.0 / k as f64)).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(i_of_lambda(&s, 1, ls - 1e3) < 0.01);
    }

    #[test]
    fn negative_b_mirrors() {
        let s = setup(-0.1, 0.01, 0.1);
        let root = solve_lambda1(&s, 1).unwrap();
        assert!(root.residual <= 1e-10);
        let (b0, _) = b0_and_a1(&s, 1, root.lambda1).unwrap();
        assert!(b0.iter().all(|&v| v < 0.0));
        assert!(s.coeffs.alpha1_slope() < 0.0);
    }

    #[test]
    fn b0_a1_and_q2_inversion() {
        let s = setup(0.1, 0.01, 0.1);
        let m = 2;
        let root = solve_lambda1(&s, m).unwrap();
        let (b0, a1) = b0_and_a1(&s, m, root.lambda1).unwrap();
        let p2 = p_coeff(2, m, &s.cfg);
        let mass: f64 = (0..s.nz()).map(|k| s.zgrid.weights[k] * s.w[1][k] * b0[k]).sum();
        assert!((mass - 1.0 / p2).abs() < 1e-9);
        assert!(b0.iter().all(|&v| v < 0.0));
        let expect = p_coeff(1, m, &s.cfg) / p2 / s.coeffs.alpha0(0);
        assert!((a1 - expect).abs() < 1e-8 * expect.abs());

        let g: Vec<f64> = s.zgrid.nodes.iter().map(|z| (3.0 * z).sin() + z * z).collect();
        let (sol, mu) = invert_q2hat(&s, &b0, &g).unwrap();
        let int_sol: f64 = (0..s.nz()).map(|k| s.zgrid.weights[k] * s.w[1][k] * sol[k]).sum();
        for k in 0..s.nz() {
            let a = s.coeffs.alpha1(1, root.lambda1, s.zgrid.nodes[k]);
            let back = a * sol[k] - p2 * int_sol + mu * s.cfg.R2.powi(2) * b0[k];
            assert!((back - g[k]).abs() < 1e-9);
        }
        let (sol0, mu0) = invert_q2hat(&s, &b0, &vec![0.0; s.nz()]).unwrap();
        assert_eq!(mu0, 0.0);
        assert!(sol0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constructed_kernel_is_a_null_vector() {
        let s = setup(0.1, 0.01, 0.1);
        let eig = construct(&s, 1).unwrap();
        assert!(*eig.distances.last().unwrap() <= FIXED_POINT_TOL);
        let d = validate_kernel(&s, &eig, 4, Exec::Parallel);
        assert!(d.check(s.eps).is_ok(), "{d:?}");
        assert!(d.residual < 1e-10, "{}", d.residual);
        assert!(d.perturbed_sigma_min > 1e3 * d.sigma_min);
        let adj = adjoint_kernel(&s, &eig).unwrap();
        assert!(adj.c > 0.0);
        let t = transversality(&s, &eig, &adj);
        assert!(t.t.signum() == t.leading.signum());
    }
}
