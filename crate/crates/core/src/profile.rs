// SPDX-License-Identifier: MIT OR Apache-2.0
//! The smooth two-band vorticity increment ϖ_{ε,κ} and its edge function φ_κ.
//!
//! φ_κ is the linear ramp `(1 - z)/2` on `[-(1-κ), 1-κ]` convolved with a rescaled bump.
//! Both φ_κ and its derivatives reduce to one-dimensional moments of the bump, which
//! are tabulated once and completed by a partial-panel Gauss rule on each call.

use crate::domain::AnnulusConfig;
use crate::error::{Error, Result};
use crate::quad::Rule;

const PANELS: usize = 128;
const PANEL_NODES: usize = 20;

/// Normalized bump `Θ(u) = c exp(-1/(1-u²))` on (-1, 1) with cumulative moments.
#[derive(Clone, Debug)]
pub struct Mollifier {
    norm: f64,
    rule: Rule,
    cum0: Vec<f64>,
    cum1: Vec<f64>,
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

impl Mollifier {
    pub fn new() -> Mollifier {
        let rule = Rule::gauss(PANEL_NODES);
        let h = 2.0 / PANELS as f64;
        let mut cum0 = vec![0.0; PANELS + 1];
        let mut cum1 = vec![0.0; PANELS + 1];
        for k in 0..PANELS {
            let a = -1.0 + h * k as f64;
            cum0[k + 1] = cum0[k] + rule.integrate(a, a + h, bump);
            cum1[k + 1] = cum1[k] + rule.integrate(a, a + h, |u| u * bump(u));
        }
        let norm = 1.0 / cum0[PANELS];
        cum0.iter_mut().for_each(|v| *v *= norm);
        cum1.iter_mut().for_each(|v| *v *= norm);
        Mollifier { norm, rule, cum0, cum1 }
    }

    /// Θ(u).
    pub fn theta(&self, u: f64) -> f64 {
        self.norm * bump(u)
    }

    /// sup Θ = Θ(0).
    pub fn theta_max(&self) -> f64 {
        self.norm * (-1.0f64).exp()
    }

    fn partial(&self, x: f64, moment: usize) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        let table = if moment == 0 { &self.cum0 } else { &self.cum1 };
        if x >= 1.0 {
            return table[PANELS];
        }
        let h = 2.0 / PANELS as f64;
        let k = (((x + 1.0) / h) as usize).min(PANELS - 1);
        let a = -1.0 + h * k as f64;
        let rest = self.rule.integrate(a, x, |u| if moment == 0 { self.theta(u) } else { u * self.theta(u) });
        table[k] + rest
    }

    /// Ψ(x) = ∫_{-1}^x Θ.
    pub fn psi(&self, x: f64) -> f64 {
        self.partial(x, 0)
    }

    /// ∫_{-1}^x u Θ(u) du.
    pub fn first_moment(&self, x: f64) -> f64 {
        self.partial(x, 1)
    }

    /// ∫_{-∞}^x Ψ.
    pub fn psi2(&self, x: f64) -> f64 {
        if x <= -1.0 {
            0.0
        } else if x >= 1.0 {
            x
        } else {
            x * self.psi(x) - self.first_moment(x)
        }
    }
}

impl Default for Mollifier {
    fn default() -> Self {
        Mollifier::new()
    }
}

/// Band half-width ε, regularization κ and the derived profile evaluators.
#[derive(Clone, Debug)]
pub struct Profile {
    pub cfg: AnnulusConfig,
    pub eps: f64,
    pub kappa: f64,
    pub mollifier: Mollifier,
}

/// Which piece of the annulus a radius falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Inner,
    Band1,
    Plateau,
    Band2,
    Outer,
}

impl Profile {
    pub fn new(cfg: AnnulusConfig, eps: f64, kappa: f64) -> Result<Profile> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1), got {kappa}")));
        }
        let limit = cfg.max_band_half_width();
        if !(eps > 0.0 && eps < limit) {
            return Err(Error::Config(format!("eps must lie in (0, {limit}), got {eps}")));
        }
        Ok(Profile { cfg, eps, kappa, mollifier: Mollifier::new() })
    }

    /// φ_κ(z) for |z| ≤ 1.
    pub fn phi_kappa(&self, z: f64) -> Result<f64> {
        if z.abs() > 1.0 {
            return Err(Error::Domain(format!("phi_kappa needs |z| <= 1, got {z}")));
        }
        Ok(self.phi(z))
    }

    /// φ_κ extended by 1 for z < -1 and by 0 for z > 1.
    pub fn phi(&self, z: f64) -> f64 {
        if z <= -1.0 {
            1.0
        } else if z >= 1.0 {
            0.0
        } else if z > 0.0 {
            1.0 - self.phi_left(-z)
        } else {
            self.phi_left(z)
        }
    }

    fn phi_left(&self, z: f64) -> f64 {
        let k = self.kappa;
        let a = (z + 1.0 - k) / k;
        let b = (z - 1.0 + k) / k;
        let m = &self.mollifier;
        1.0 - k * (m.psi2(a) - m.psi2(b)) / (2.0 * (1.0 - k))
    }

    /// φ_κ'(z), zero outside (-1, 1).
    pub fn dphi(&self, z: f64) -> f64 {
        if z.abs() >= 1.0 {
            return 0.0;
        }
        let k = self.kappa;
        let z = -z.abs();
        let a = (z + 1.0 - k) / k;
        let b = (z - 1.0 + k) / k;
        let m = &self.mollifier;
        -(m.psi(a) - m.psi(b)) / (2.0 * (1.0 - k))
    }

    /// φ_κ''(z), zero outside (-1, 1).
    pub fn d2phi(&self, z: f64) -> f64 {
        if z.abs() >= 1.0 {
            return 0.0;
        }
        let k = self.kappa;
        let s = if z > 0.0 { -1.0 } else { 1.0 };
        let z = -z.abs();
        let a = (z + 1.0 - k) / k;
        let b = (z - 1.0 + k) / k;
        let m = &self.mollifier;
        -s * (m.theta(a) - m.theta(b)) / (2.0 * k * (1.0 - k))
    }

    /// Weight σ₋(z) = -φ_κ'(-z).
    pub fn sigma_minus(&self, z: f64) -> f64 {
        -self.dphi(-z)
    }

    /// Weight σ₊(z) = -φ_κ'(z).
    pub fn sigma_plus(&self, z: f64) -> f64 {
        -self.dphi(z)
    }

    pub fn region(&self, r: f64) -> Region {
        let (r1, r2) = (self.cfg.R1, self.cfg.R2);
        let e = self.eps;
        if r < r1 - e {
            Region::Inner
        } else if r <= r1 + e {
            Region::Band1
        } else if r < r2 - e {
            Region::Plateau
        } else if r <= r2 + e {
            Region::Band2
        } else {
            Region::Outer
        }
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if r < self.cfg.r1 || r > self.cfg.r2 {
            return Err(Error::Domain(format!("radius {r} outside [{}, {}]", self.cfg.r1, self.cfg.r2)));
        }
        Ok(())
    }

    /// ϖ_{ε,κ}(r).
    pub fn varpi(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.varpi_unchecked(r))
    }

    pub fn varpi_unchecked(&self, r: f64) -> f64 {
        let e = self.eps;
        match self.region(r) {
            Region::Inner | Region::Outer => 0.0,
            Region::Band1 => e * self.phi((self.cfg.R1 - r) / e),
            Region::Plateau => e,
            Region::Band2 => e * self.phi((r - self.cfg.R2) / e),
        }
    }

    /// ϖ'_{ε,κ}(r).
    pub fn varpi_prime(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.varpi_prime_unchecked(r))
    }

    pub fn varpi_prime_unchecked(&self, r: f64) -> f64 {
        let e = self.eps;
        match self.region(r) {
            Region::Band1 => -self.dphi((self.cfg.R1 - r) / e),
            Region::Band2 => self.dphi((r - self.cfg.R2) / e),
            _ => 0.0,
        }
    }

    /// ϖ''_{ε,κ}(r).
    pub fn varpi_second(&self, r: f64) -> f64 {
        let e = self.eps;
        match self.region(r) {
            Region::Band1 => self.d2phi((self.cfg.R1 - r) / e) / e,
            Region::Band2 => self.d2phi((r - self.cfg.R2) / e) / e,
            _ => 0.0,
        }
    }

    /// (z, φ_κ, φ_κ') on `n` uniform points of [-1, 1].
    pub fn table(&self, n: usize) -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|i| {
                let z = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                (z, self.phi(z), self.dphi(z))
            })
            .collect()
    }
}
