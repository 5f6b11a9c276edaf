// SPDX-License-Identifier: MIT OR Apache-2.0
//! Annulus geometry, the Taylor-Couette base flow and the axisymmetric stream function.

use crate::error::{Error, Result};
use crate::profile::{Profile, Region};
use crate::quad::Rule;

/// Geometry `r1 < R1 < R2 < r2` and the Taylor-Couette constants `u = A r + B / r`.
#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnulusConfig {
    pub r1: f64,
    pub r2: f64,
    pub R1: f64,
    pub R2: f64,
    pub A: f64,
    pub B: f64,
}

#[allow(non_snake_case)]
impl AnnulusConfig {
    pub fn new(r1: f64, r2: f64, R1: f64, R2: f64, A: f64, B: f64) -> Result<AnnulusConfig> {
        let all = [r1, r2, R1, R2, A, B];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("all geometry and flow constants must be finite".into()));
        }
        if !(0.0 < r1 && r1 < R1 && R1 < R2 && R2 < r2) {
            return Err(Error::Config(format!(
                "ordering 0 < r1 < R1 < R2 < r2 violated (r1={r1}, R1={R1}, R2={R2}, r2={r2})"
            )));
        }
        if B == 0.0 {
            return Err(Error::Config("B must be nonzero (B != 0 is required for a rotating branch)".into()));
        }
        let cfg = AnnulusConfig { r1, r2, R1, R2, A, B };
        let (u1, u2) = (cfg.u_tc_unchecked(R1), cfg.u_tc_unchecked(R2));
        if (u1 - u2).abs() <= 1e-14 * (u1.abs() + u2.abs()) {
            return Err(Error::Config("u_tc(R1) must differ from u_tc(R2)".into()));
        }
        if u2 == 0.0 {
            return Err(Error::Config("u_tc(R2) must be nonzero".into()));
        }
        Ok(cfg)
    }

    /// Azimuthal Taylor-Couette velocity `A r + B / r`.
    pub fn u_tc(&self, r: f64) -> Result<f64> {
        if r < self.r1 || r > self.r2 {
            return Err(Error::Domain(format!("radius {r} outside [{}, {}]", self.r1, self.r2)));
        }
        Ok(self.u_tc_unchecked(r))
    }

    pub fn u_tc_unchecked(&self, r: f64) -> f64 {
        self.A * r + self.B / r
    }

    /// log(r2 / r1).
    pub fn log_ratio(&self) -> f64 {
        (self.r2 / self.r1).ln()
    }

    /// Circulation γ = ψ(r2) - ψ(r1) of the Taylor-Couette flow.
    pub fn circulation(&self) -> f64 {
        -(0.5 * self.A * (self.r2 * self.r2 - self.r1 * self.r1) + self.B * self.log_ratio())
    }

    /// λ₀ from the boundary-data formula.
    pub fn lambda0(&self) -> f64 {
        let l = self.log_ratio();
        let rr = self.R2 * self.R2;
        self.A * (1.0 - (self.r2 * self.r2 - self.r1 * self.r1) / (2.0 * rr * l)) - self.circulation() / (rr * l)
    }

    /// λ₀ as the angular velocity of the base flow at R2.
    pub fn lambda0_tc(&self) -> f64 {
        self.u_tc_unchecked(self.R2) / self.R2
    }

    /// Largest admissible band half-width.
    pub fn max_band_half_width(&self) -> f64 {
        (self.R1 - self.r1).min(0.5 * (self.R2 - self.R1)).min(self.r2 - self.R2)
    }

    pub fn band_center(&self, band: usize) -> f64 {
        if band == 0 {
            self.R1
        } else {
            self.R2
        }
    }
}

/// Axisymmetric stream function φ of the total vorticity `2A + ϖ_{ε,κ}` with
/// `φ(r1) = 0`, `φ(r2) = γ`.
#[derive(Clone, Debug)]
pub struct BaseFlow {
    pub cfg: AnnulusConfig,
    profile: Option<Profile>,
    rule: Rule,
    c: f64,
}

fn g_antiderivative(t: f64) -> f64 {
    t * t * t.ln() / 2.0 - t * t / 4.0
}

impl BaseFlow {
    /// Pure Taylor-Couette flow (ε = 0).
    pub fn taylor_couette(cfg: AnnulusConfig) -> BaseFlow {
        BaseFlow::build(cfg, None)
    }

    pub fn new(profile: &Profile) -> BaseFlow {
        BaseFlow::build(profile.cfg, Some(profile.clone()))
    }

    fn build(cfg: AnnulusConfig, profile: Option<Profile>) -> BaseFlow {
        let mut bf = BaseFlow { cfg, profile, rule: Rule::gauss(20), c: 0.0 };
        let (w2, v2) = bf.moments(cfg.r2);
        bf.c = (cfg.circulation() + w2 * cfg.r2.ln() - v2) / cfg.log_ratio();
        bf
    }

    pub fn profile(&self) -> Option<&Profile> {
        self.profile.as_ref()
    }

    /// `(∫_{r1}^r t ϖ_{ε,κ}, ∫_{r1}^r t ϖ_{ε,κ} log t)`.
    pub fn profile_moments(&self, r: f64) -> (f64, f64) {
        let Some(p) = &self.profile else {
            return (0.0, 0.0);
        };
        let c = &self.cfg;
        let e = p.eps;
        let breaks = [c.R1 - e, c.R1 + e, c.R2 - e, c.R2 + e];
        let mut w = 0.0;
        let mut v = 0.0;
        for k in 0..3 {
            let (a, b) = (breaks[k], breaks[k + 1].min(r));
            if b <= a {
                break;
            }
            let panels = if k == 1 { 4 } else { ((32.0 * (b - a) / (2.0 * e)).ceil() as usize).max(1) };
            w += self.rule.composite(a, b, panels, |t| t * p.varpi_unchecked(t));
            v += self.rule.composite(a, b, panels, |t| t * p.varpi_unchecked(t) * t.ln());
        }
        (w, v)
    }

    /// `(W(r), V(r))` for the total vorticity.
    pub fn moments(&self, r: f64) -> (f64, f64) {
        let c = &self.cfg;
        let (wp, vp) = self.profile_moments(r);
        let w = c.A * (r * r - c.r1 * c.r1) + wp;
        let v = 2.0 * c.A * (g_antiderivative(r) - g_antiderivative(c.r1)) + vp;
        (w, v)
    }

    /// Constant `C` in `φ = C log(r/r1) - W log r + V`.
    pub fn c_const(&self) -> f64 {
        self.c
    }

    /// `(φ(r), φ'(r))`.
    pub fn phi_and_phi_prime(&self, r: f64) -> Result<(f64, f64)> {
        let c = &self.cfg;
        if r < c.r1 || r > c.r2 {
            return Err(Error::Domain(format!("radius {r} outside [{}, {}]", c.r1, c.r2)));
        }
        let (w, v) = self.moments(r);
        let phi = self.c * (r / c.r1).ln() - w * r.ln() + v;
        let dphi = (self.c - w) / r;
        if !(phi.is_finite() && dphi.is_finite()) {
            return Err(Error::Numeric(format!("base stream function not finite at r = {r}")));
        }
        Ok((phi, dphi))
    }

    /// Υ(x) = x φ'(x).
    pub fn upsilon(&self, x: f64) -> f64 {
        self.c - self.moments(x).0
    }

    /// Total base vorticity `2A + ϖ_{ε,κ}(r)`.
    pub fn vorticity(&self, r: f64) -> f64 {
        2.0 * self.cfg.A + self.profile.as_ref().map_or(0.0, |p| p.varpi_unchecked(r))
    }

    pub fn region(&self, r: f64) -> Region {
        self.profile.as_ref().map_or(Region::Inner, |p| p.region(r))
    }
}
