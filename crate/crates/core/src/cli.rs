//! Command-line front end: configuration parsing, subcommands and CSV/report output.
//!
//! Every subcommand writes `<name>.csv` files and a `<name>_report.txt` into the output
//! directory. Floats are printed in `{:.16e}` format (17 significant digits).

use crate::domain::{AnnulusConfig, BaseFlow};
use crate::error::{Error, Result};
use crate::eulersim::{verify_rotation, SimState, Simulator};
use crate::kernel::{self, EigenSolution};
use crate::linop::{BandSetup, ZGrid, DEFAULT_Z_NODES};
use crate::nonlinear::{self, ContinuationOptions, LevelSetPerturbation};
use crate::par::{self, Exec};
use crate::poisson::{fd_mode_solve, solve_axisymmetric, solve_mode, PoissonSolver, RadialGrid};
use crate::profile::Profile;
use clap::{Args, Parser, Subcommand};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Every key accepted in a configuration file.
pub const CONFIG_KEYS: [&str; 13] =
    ["r1", "r2", "R1", "R2", "A", "B", "eps", "kappa", "m", "sigma", "M", "nodes_per_panel", "n_theta"];

/// Validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub annulus: AnnulusConfig,
    pub eps: f64,
    pub kappa: f64,
    pub m: u32,
    pub sigma: f64,
    pub max_mode: u32,
    pub nodes_per_panel: usize,
    pub n_theta: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            annulus: AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, 1.0).expect("default geometry is valid"),
            eps: 1e-2,
            kappa: 0.1,
            m: 1,
            sigma: 1e-3,
            max_mode: 8,
            nodes_per_panel: 64,
            n_theta: 32,
        }
    }
}

fn parse_number(key: &str, value: &str, range: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("key '{key}': '{value}' is not a finite number (expected {range})")))
}

fn parse_count(key: &str, value: &str, range: &str) -> Result<u64> {
    value.parse::<u64>().map_err(|_| Error::Config(format!("key '{key}': '{value}' is not a non-negative integer (expected {range})")))
}

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated keys are rejected.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let d = RunConfig::default();
    let mut geo = [d.annulus.r1, d.annulus.r2, d.annulus.R1, d.annulus.R2, d.annulus.A, d.annulus.B];
    let mut cfg = d;
    let mut seen: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}' (accepted: {})", lineno + 1, CONFIG_KEYS.join(", "))));
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config(format!("line {}: key '{key}' given twice", lineno + 1)));
        }
        seen.push(key.to_string());
        match key {
            "r1" => geo[0] = parse_number(key, value, "0 < r1 < R1")?,
            "r2" => geo[1] = parse_number(key, value, "r2 > R2")?,
            "R1" => geo[2] = parse_number(key, value, "r1 < R1 < R2")?,
            "R2" => geo[3] = parse_number(key, value, "R1 < R2 < r2")?,
            "A" => geo[4] = parse_number(key, value, "any real")?,
            "B" => geo[5] = parse_number(key, value, "a nonzero real")?,
            "eps" => cfg.eps = parse_number(key, value, "0 < eps < band separation")?,
            "kappa" => cfg.kappa = parse_number(key, value, "0 < kappa < 1")?,
            "m" => cfg.m = parse_count(key, value, "m >= 1")? as u32,
            "sigma" => cfg.sigma = parse_number(key, value, "sigma > 0")?,
            "M" => cfg.max_mode = parse_count(key, value, "M >= 1")? as u32,
            "nodes_per_panel" => cfg.nodes_per_panel = parse_count(key, value, "a positive multiple of 16")? as usize,
            "n_theta" => cfg.n_theta = parse_count(key, value, "an even integer > 2m")? as usize,
            _ => unreachable!(),
        }
    }
    cfg.annulus = AnnulusConfig::new(geo[0], geo[1], geo[2], geo[3], geo[4], geo[5])?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_str(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        Profile::new(self.annulus, self.eps, self.kappa)?;
        if self.m == 0 {
            return Err(Error::Config("key 'm': mode must be at least 1".into()));
        }
        if self.max_mode == 0 {
            return Err(Error::Config("key 'M': must be at least 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("key 'sigma': must be positive, got {}", self.sigma)));
        }
        if self.nodes_per_panel == 0 || self.nodes_per_panel % 16 != 0 {
            return Err(Error::Config(format!("key 'nodes_per_panel': must be a positive multiple of 16, got {}", self.nodes_per_panel)));
        }
        if self.n_theta % 2 != 0 || self.n_theta <= 2 * self.m as usize || self.n_theta < 4 {
            return Err(Error::Config(format!("key 'n_theta': must be even and larger than 2m, got {}", self.n_theta)));
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<Profile> {
        Profile::new(self.annulus, self.eps, self.kappa)
    }

    pub fn setup(&self) -> Result<BandSetup> {
        Ok(BandSetup::new(&self.profile()?, ZGrid::new(DEFAULT_Z_NODES)))
    }

    /// Panel counts `(n, 2n, n, 2n, n)` with band panels widened by `ε`.
    pub fn grid(&self) -> Result<RadialGrid> {
        let n = self.nodes_per_panel;
        RadialGrid::with_band_margin(&self.annulus, self.eps, self.eps, &[n, 2 * n, n, 2 * n, n])
    }

    pub fn solver(&self, exec: Exec) -> Result<PoissonSolver> {
        PoissonSolver::new(self.grid()?, self.n_theta, exec)
    }
}

#[derive(Parser, Debug)]
#[command(name = "annulus-rotor", version, about = "Rotating waves of 2D Euler near Taylor-Couette flow")]
pub struct Cli {
    /// Configuration file (key=value); defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files and reports.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Force the sequential execution path.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Vorticity profile, base stream function and the φ_κ table.
    ProfileDump,
    /// Manufactured-solution and Taylor-Couette checks of the Poisson solver.
    PoissonTest,
    /// λ₁ root, leading profiles and fixed-point corrections.
    FindEigen,
    /// SVD checks of the kernel and of the other modes up to M.
    ValidateKernel,
    /// Null vector of the adjoint operator.
    Adjoint,
    /// Transversality pairing.
    Transversality,
    /// Residual of the nonlinear functional at amplitude sigma along the kernel.
    Residual,
    /// Branch continuation up to amplitude sigma.
    Continue(ContinueArgs),
    /// Sobolev distance sweep over eps.
    Distance,
    /// Direct simulation of the rotating wave.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct ContinueArgs {
    /// Number of continuation steps.
    #[arg(long, default_value_t = 4)]
    pub steps: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Final time (one period when omitted).
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 384)]
    pub nr: usize,
    #[arg(long, default_value_t = 256)]
    pub ntheta: usize,
    #[arg(long = "checkpoint-every", default_value_t = 50)]
    pub checkpoint_every: usize,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV table with a fixed header.
pub struct Csv {
    header: &'static str,
    rows: Vec<String>,
}

impl Csv {
    pub fn new(header: &'static str) -> Csv {
        Csv { header, rows: Vec::new() }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.rows.push(cells.join(","));
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

struct Output {
    dir: PathBuf,
    report: String,
}

impl Output {
    fn new(dir: &Path, title: &str, cfg: &RunConfig) -> Result<Output> {
        std::fs::create_dir_all(dir)?;
        let mut report = format!("{title}\n{}\n", "=".repeat(title.len()));
        let a = &cfg.annulus;
        let _ = writeln!(
            report,
            "config: r1={} r2={} R1={} R2={} A={} B={} eps={} kappa={} m={} sigma={} M={} nodes_per_panel={} n_theta={}",
            a.r1, a.r2, a.R1, a.R2, a.A, a.B, cfg.eps, cfg.kappa, cfg.m, cfg.sigma, cfg.max_mode, cfg.nodes_per_panel, cfg.n_theta
        );
        Ok(Output { dir: dir.to_path_buf(), report })
    }

    fn line(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.report, "{key}: {}", fmt_f(value));
    }

    fn text(&mut self, s: &str) {
        self.report.push_str(s);
        self.report.push('\n');
    }

    fn csv(&self, name: &str, csv: &Csv) -> Result<()> {
        std::fs::write(self.dir.join(format!("{name}.csv")), csv.render())?;
        Ok(())
    }

    fn finish(&self, name: &str) -> Result<()> {
        std::fs::write(self.dir.join(format!("{name}_report.txt")), &self.report)?;
        Ok(())
    }

    /// Writes the report, recording the error when there is one.
    fn close<T>(mut self, name: &str, res: Result<T>) -> Result<T> {
        match &res {
            Ok(_) => self.text("status: ok"),
            Err(e) => self.text(&format!("status: failed ({e})")),
        }
        self.finish(name)?;
        res
    }
}

fn construct(out: &mut Output, cfg: &RunConfig, setup: &BandSetup) -> Result<EigenSolution> {
    out.line("lambda0", setup.coeffs.lambda0);
    out.line("lambda_star", kernel::lambda_star(setup));
    out.line("sup_I", kernel::lambda1_supremum(setup, cfg.m));
    kernel::construct(setup, cfg.m)
}

fn profile_dump(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut out = Output::new(dir, "profile-dump", cfg)?;
    let res = (|| {
        let profile = cfg.profile()?;
        let base = BaseFlow::new(&profile);
        let grid = cfg.grid()?;
        let mut csv = Csv::new("r,varpi,varpi_prime,varpi_second,omega,psi0,dpsi0");
        for &r in &grid.nodes {
            let (p, dp) = base.phi_and_phi_prime(r)?;
            csv.row(&[r, profile.varpi(r)?, profile.varpi_prime(r)?, profile.varpi_second(r), base.vorticity(r), p, dp].map(fmt_f));
        }
        out.csv("profile", &csv)?;
        let mut table = Csv::new("z,phi,dphi");
        for (z, p, d) in profile.table(1025) {
            table.row(&[z, p, d].map(fmt_f));
        }
        out.csv("phi_table", &table)?;
        out.line("lambda0", cfg.annulus.lambda0());
        out.line("lambda0_tc", cfg.annulus.lambda0_tc());
        out.line("circulation", cfg.annulus.circulation());
        out.line("theta_max", profile.mollifier.theta_max());
        out.line("radial_nodes", grid.len() as f64);
        Ok(())
    })();
    out.close("profile", res)
}

fn poisson_test(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut out = Output::new(dir, "poisson-test", cfg)?;
    let res = (|| {
        let a = cfg.annulus;
        let (r1, r2) = (a.r1, a.r2);
        let grid = RadialGrid::uniform(r1, r2, 512)?;
        let exact = |r: f64| (r - r1) * (r2 - r) * r * r;
        let rhs = |n: u32, r: f64| {
            let p = (r - r1) * (r2 - r);
            let dp = -2.0 * r + r1 + r2;
            let (f, df, d2f) = (p * r * r, dp * r * r + 2.0 * p * r, -2.0 * r * r + 4.0 * dp * r + 2.0 * p);
            d2f + df / r - (n * n) as f64 * f / (r * r)
        };
        let mut csv = Csv::new("n,l2_error,fd_gap");
        let mut worst: f64 = 0.0;
        let mut worst_fd: f64 = 0.0;
        for n in 1..=16u32 {
            let g: Vec<f64> = grid.nodes.iter().map(|&r| rhs(n, r)).collect();
            let (f, _) = solve_mode(n, &g, &grid)?;
            let e2: Vec<f64> = grid.nodes.iter().zip(&f).map(|(&r, v)| (v - exact(r)).powi(2)).collect();
            let n2: Vec<f64> = grid.nodes.iter().map(|&r| exact(r).powi(2)).collect();
            let err = (grid.integrate(&e2) / grid.integrate(&n2)).sqrt();
            let (rs, ffd) = fd_mode_solve(n, r1, r2, 4001, |r| rhs(n, r));
            let scale = ffd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let gap = rs.iter().zip(&ffd).map(|(&r, v)| (grid.interp(&f, r) - v).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(err);
            worst_fd = worst_fd.max(gap);
            csv.row(&[n.to_string(), fmt_f(err), fmt_f(gap)]);
        }
        out.csv("poisson", &csv)?;
        let tc_grid = cfg.grid()?;
        let (_, dpsi) = solve_axisymmetric(&a, &tc_grid, |_| 2.0 * a.A);
        let tc_err = tc_grid.nodes.iter().zip(&dpsi).map(|(&r, d)| (-d - a.u_tc_unchecked(r)).abs()).fold(0.0, f64::max);
        out.line("max_manufactured_l2_error", worst);
        out.line("max_fd_gap", worst_fd);
        out.line("taylor_couette_velocity_error", tc_err);
        if worst > 1e-7 || worst_fd > 1e-6 || tc_err > 1e-10 {
            return Err(Error::Validation("Poisson checks exceeded their tolerances".into()));
        }
        Ok(())
    })();
    out.close("poisson", res)
}

fn find_eigen(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut out = Output::new(dir, "find-eigen", cfg)?;
    let res = (|| {
        let setup = cfg.setup()?;
        let mut scan = Csv::new("m,sup_I,lambda1,i_residual");
        for m in 1..=cfg.max_mode {
            let sup = kernel::lambda1_supremum(&setup, m);
            let (l1, r) = match kernel::solve_lambda1(&setup, m) {
                Ok(root) => (root.lambda1, root.residual),
                Err(_) => (f64::NAN, f64::NAN),
            };
            scan.row(&[m.to_string(), fmt_f(sup), fmt_f(l1), fmt_f(r)]);
        }
        out.csv("lambda1_scan", &scan)?;
        let eig = construct(&mut out, cfg, &setup)?;
        out.line("lambda1", eig.lambda1);
        out.line("lambda1_closed_form", kernel::lambda1_closed_form(&setup, cfg.m));
        out.line("lambda2", eig.lambda2);
        out.line("lambda", eig.lambda());
        out.line("i_residual", eig.lambda1_residual);
        out.line("a1", eig.a1);
        out.line("contraction_ratio", eig.contraction_ratio());
        let mut csv = Csv::new("m,eps,kappa,lambda0,lambda1,lambda2,lambda,i_residual,contraction_ratio,iterations");
        csv.row(&[
            cfg.m.to_string(),
            fmt_f(cfg.eps),
            fmt_f(cfg.kappa),
            fmt_f(eig.lambda0),
            fmt_f(eig.lambda1),
            fmt_f(eig.lambda2),
            fmt_f(eig.lambda()),
            fmt_f(eig.lambda1_residual),
            fmt_f(eig.contraction_ratio()),
            eig.distances.len().to_string(),
        ]);
        out.csv("eigen", &csv)?;
        let mut fp = Csv::new("iteration,distance");
        for (k, d) in eig.distances.iter().enumerate() {
            fp.row(&[(k + 1).to_string(), fmt_f(*d)]);
        }
        out.csv("fixed_point", &fp)?;
        let mut prof = Csv::new("band,z,h");
        let h = eig.stacked();
        for (k, v) in h.iter().enumerate() {
            prof.row(&[(k / setup.nz() + 1).to_string(), fmt_f(setup.zgrid.nodes[k % setup.nz()]), fmt_f(*v)]);
        }
        out.csv("kernel_profile", &prof)?;
        Ok(())
    })();
    out.close("eigen", res)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn validate_kernel_cmd(cfg: &RunConfig, dir: &Path, seed: u64, exec: Exec) -> Result<()> {
    let mut out = Output::new(dir, "validate-kernel", cfg)?;
    let res = (|| {
        let setup = cfg.setup()?;
        let eig = construct(&mut out, cfg, &setup)?;
        let d = kernel::validate_kernel(&setup, &eig, cfg.max_mode, exec);
        let mut csv = Csv::new("n,sigma_min,sigma_max,nonsingular");
        for c in &d.others {
            csv.row(&[c.n.to_string(), fmt_f(c.sigma_min), fmt_f(c.norm), (c.nonsingular(cfg.eps) as u8).to_string()]);
        }
        out.csv("kernel_modes", &csv)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut duality: f64 = 0.0;
        for n in 1..=cfg.max_mode {
            let op = setup.assemble(n, eig.lambda());
            let adj = op.adjoint();
            for _ in 0..4 {
                let u = random_vec(&mut rng, op.size());
                let w = random_vec(&mut rng, op.size());
                let gap = (setup.inner(&op.apply(&u), &w) - setup.inner(&u, &adj.apply(&w))).abs();
                duality = duality.max(gap / (setup.norm(&u) * setup.norm(&w)));
            }
        }
        out.line("lambda", eig.lambda());
        out.line("sigma_min", d.sigma_min);
        out.line("sigma_second", d.sigma_second);
        out.line("gap_ratio", d.gap_ratio());
        out.line("null_vector_cosine", d.cosine);
        out.line("residual_converged", d.residual);
        out.line("residual_first_iterate", d.residual_first);
        out.line("residual_zeroth_iterate", d.residual_zeroth);
        out.line("sigma_min_at_lambda_plus_0.1", d.perturbed_sigma_min);
        out.line("duality_max_relative", duality);
        d.check(cfg.eps)
    })();
    out.close("kernel", res)
}

fn adjoint_cmd(cfg: &RunConfig, dir: &Path, seed: u64) -> Result<()> {
    let mut out = Output::new(dir, "adjoint", cfg)?;
    let res = (|| {
        let setup = cfg.setup()?;
        let eig = construct(&mut out, cfg, &setup)?;
        let adj = kernel::adjoint_kernel(&setup, &eig)?;
        let nz = setup.nz();
        let h = eig.stacked();
        let mut csv = Csv::new("band,z,adjoint,kernel");
        for k in 0..2 * nz {
            csv.row(&[(k / nz + 1).to_string(), fmt_f(setup.zgrid.nodes[k % nz]), fmt_f(adj.stacked[k]), fmt_f(h[k])]);
        }
        out.csv("adjoint", &csv)?;
        let op = setup.assemble(eig.m, eig.lambda());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut range: f64 = 0.0;
        for _ in 0..8 {
            let u = random_vec(&mut rng, op.size());
            range = range.max(setup.inner(&op.apply(&u), &adj.stacked).abs() / setup.norm(&u));
        }
        out.line("sigma_ratio", adj.sigma_min / adj.sigma_second);
        out.line("C", adj.c);
        out.line("a_star_weighted_norm", adj.a_norm);
        out.line("b_star_defect", adj.b_defect);
        out.line("range_orthogonality", range);
        Ok(())
    })();
    out.close("adjoint", res)
}

fn transversality_cmd(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut out = Output::new(dir, "transversality", cfg)?;
    let res = (|| {
        let setup = cfg.setup()?;
        let eig = construct(&mut out, cfg, &setup)?;
        let adj = kernel::adjoint_kernel(&setup, &eig)?;
        let t = kernel::transversality(&setup, &eig, &adj);
        let mut csv = Csv::new("eps,t,band1,band2,leading,ratio");
        csv.row(&[cfg.eps, t.t, t.band1, t.band2, t.leading, t.t / t.leading].map(fmt_f));
        out.csv("transversality", &csv)?;
        out.line("T", t.t);
        out.line("leading", t.leading);
        out.line("ratio", t.t / t.leading);
        if t.t.abs() < 0.5 * t.leading.abs() {
            return Err(Error::Validation("transversality pairing below half of its leading term".into()));
        }
        Ok(())
    })();
    out.close("transversality", res)
}

fn residual_cmd(cfg: &RunConfig, dir: &Path, exec: Exec) -> Result<()> {
    let mut out = Output::new(dir, "residual", cfg)?;
    let res = (|| {
        let profile = cfg.profile()?;
        let setup = cfg.setup()?;
        let eig = construct(&mut out, cfg, &setup)?;
        let solver = cfg.solver(exec)?;
        let f = LevelSetPerturbation::from_eigen(&setup, &eig, cfg.sigma)?;
        let r = nonlinear::functional_f(eig.lambda(), &f, &profile, &solver, exec)?;
        let nz = setup.nz();
        let mut csv = Csv::new("band,z,theta,F");
        for band in 0..2 {
            for k in 0..nz {
                for j in 0..r.n_theta {
                    csv.row(&[(band + 1).to_string(), fmt_f(setup.zgrid.nodes[k]), fmt_f(solver.theta(j)), fmt_f(r.values[band][k * r.n_theta + j])]);
                }
            }
        }
        out.csv("residual", &csv)?;
        let proj = r.mode_cos(eig.m);
        out.line("lambda", eig.lambda());
        out.line("sup", r.sup());
        out.line("l2", r.l2(&setup.zgrid));
        out.line("max_angular_mean", r.max_row_mean());
        out.line("mode_m_sup", proj.iter().fold(0.0, |m, v| m.max(v.abs())));
        Ok(())
    })();
    out.close("residual", res)
}

fn continue_cmd(cfg: &RunConfig, dir: &Path, args: &ContinueArgs, exec: Exec) -> Result<()> {
    let mut out = Output::new(dir, "continue", cfg)?;
    let res = (|| {
        let profile = cfg.profile()?;
        let setup = cfg.setup()?;
        let eig = construct(&mut out, cfg, &setup)?;
        let solver = cfg.solver(exec)?;
        let opts = ContinuationOptions { steps: args.steps.max(1), ..Default::default() };
        let pts = nonlinear::continue_branch(&setup, &profile, &solver, &eig, cfg.sigma, &opts, exec)?;
        let mut csv = Csv::new("sigma,lambda,residual,full_residual,profile_gap,newton_iterations,h1_distance");
        for p in &pts {
            let f = LevelSetPerturbation::from_stacked(&setup, eig.m, &p.profile, 1.0)?;
            let w = nonlinear::build_vorticity(&f, &profile, &solver.grid, solver.n_theta, exec)?;
            let s = nonlinear::sobolev_distance_field(&profile, &solver, &w, 1.0, exec)?;
            csv.row(&[
                fmt_f(p.sigma),
                fmt_f(p.lambda),
                fmt_f(p.residual),
                fmt_f(p.full_residual),
                fmt_f(p.profile_gap),
                p.newton_iterations.to_string(),
                fmt_f(s.h1),
            ]);
        }
        out.csv("continue", &csv)?;
        let last = pts.last().expect("branch has at least the trivial point");
        out.line("lambda_eigen", eig.lambda());
        out.line("lambda_sigma", last.lambda);
        out.line("relative_lambda_gap", (last.lambda - eig.lambda()).abs() / eig.lambda().abs());
        out.line("profile_gap", last.profile_gap);
        out.line("max_step_residual", pts.iter().map(|p| p.residual).fold(0.0, f64::max));
        Ok(())
    })();
    out.close("continue", res)
}

/// ε values of the distance sweep.
pub const DISTANCE_EPS: [f64; 3] = [2e-2, 1e-2, 5e-3];
/// Sobolev indices of the distance sweep.
pub const DISTANCE_S: [f64; 4] = [0.0, 0.5, 1.0, 1.25];

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn distance_cmd(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut out = Output::new(dir, "distance", cfg)?;
    let res = (|| {
        let mut csv = Csv::new("eps,kappa,s,norm");
        let mut h1 = Vec::new();
        let mut margin = f64::INFINITY;
        for &e in &DISTANCE_EPS {
            let profile = Profile::new(cfg.annulus, e, cfg.kappa)?;
            for &s in &DISTANCE_S {
                let rep = nonlinear::sobolev_distance(&profile, s)?;
                csv.row(&[e, cfg.kappa, s, rep.interpolated].map(fmt_f));
                if s == 1.0 {
                    h1.push(rep.h1);
                    let worst = rep.band_h2_sq.iter().fold(0.0f64, |m, v| m.max(*v));
                    margin = margin.min(rep.band_h2_bound / worst);
                }
            }
        }
        out.csv("distance", &csv)?;
        out.line("h1_slope", loglog_slope(&DISTANCE_EPS, &h1));
        out.line("h2_bound_margin", margin);
        Ok(())
    })();
    out.close("distance", res)
}

fn simulate_cmd(cfg: &RunConfig, dir: &Path, args: &SimulateArgs, exec: Exec) -> Result<()> {
    let mut out = Output::new(dir, "simulate", cfg)?;
    let res = (|| {
        if args.ntheta % 2 != 0 || args.ntheta <= 2 * cfg.m as usize {
            return Err(Error::Config(format!("--ntheta must be even and larger than 2m, got {}", args.ntheta)));
        }
        let profile = cfg.profile()?;
        let setup = cfg.setup()?;
        let eig = construct(&mut out, cfg, &setup)?;
        let solver = cfg.solver(exec)?;
        let pts = nonlinear::continue_branch(&setup, &profile, &solver, &eig, cfg.sigma, &ContinuationOptions::default(), exec)?;
        let last = pts.last().expect("branch has at least the trivial point");
        let sim = Simulator::for_profile(&profile, args.nr, args.ntheta, exec)?;
        let f = LevelSetPerturbation::from_stacked(&setup, eig.m, &last.profile, 1.0)?;
        let w = nonlinear::build_vorticity(&f, &profile, sim.grid(), args.ntheta, exec)?;
        let state = SimState { omega: w.values, time: 0.0 };
        let rep = verify_rotation(&sim, &state, eig.m, last.lambda, args.t_end, args.dt, args.checkpoint_every)?;
        let mut csv = Csv::new("t,lambda_meas,return_error,circulation,energy");
        for c in &rep.checkpoints {
            csv.row(&[c.t, c.lambda_meas, c.return_error, c.conserved.circulation, c.conserved.energy].map(fmt_f));
        }
        out.csv("simulate", &csv)?;
        out.line("lambda_expected", rep.lambda_expected);
        out.line("lambda_measured", rep.lambda_meas);
        out.line("relative_rate_gap", (rep.lambda_meas - rep.lambda_expected).abs() / rep.lambda_expected.abs());
        out.line("period", rep.period);
        out.line("dt", rep.dt);
        out.line("steps", rep.steps as f64);
        out.line("return_error", rep.return_error);
        out.line("return_error_perturbation", rep.return_error_perturbation);
        out.line("circulation_drift", rep.circulation_drift());
        out.line("mean_vorticity_drift", rep.mean_vorticity_drift());
        out.line("energy_drift", rep.energy_drift());
        Ok(())
    })();
    out.close("simulate", res)
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    par::init_threads_from_env()?;
    let cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let dir = cli.out.as_path();
    match &cli.command {
        Command::ProfileDump => profile_dump(&cfg, dir),
        Command::PoissonTest => poisson_test(&cfg, dir),
        Command::FindEigen => find_eigen(&cfg, dir),
        Command::ValidateKernel => validate_kernel_cmd(&cfg, dir, cli.seed, exec),
        Command::Adjoint => adjoint_cmd(&cfg, dir, cli.seed),
        Command::Transversality => transversality_cmd(&cfg, dir),
        Command::Residual => residual_cmd(&cfg, dir, exec),
        Command::Continue(a) => continue_cmd(&cfg, dir, a, exec),
        Command::Distance => distance_cmd(&cfg, dir),
        Command::Simulate(a) => simulate_cmd(&cfg, dir, a, exec),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
