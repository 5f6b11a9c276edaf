use annulus_rotor::kernel;
use annulus_rotor::linop::{BandSetup, ZGrid};
use annulus_rotor::nonlinear::{build_vorticity, functional_f, LevelSetPerturbation};
use annulus_rotor::poisson::{PoissonSolver, RadialGrid};
use annulus_rotor::{AnnulusConfig, Exec, Profile};

fn weak_swirl(b: f64) -> (Profile, BandSetup, PoissonSolver) {
    weak_swirl_eps(b, 1e-2)
}

fn weak_swirl_eps(b: f64, eps: f64) -> (Profile, BandSetup, PoissonSolver) {
    let cfg = AnnulusConfig::new(1.0, 2.0, 1.2, 1.5, 0.0, b).unwrap();
    let profile = Profile::new(cfg, eps, 0.1).unwrap();
    let setup = BandSetup::new(&profile, ZGrid::new(48));
    let grid = RadialGrid::with_band_margin(&cfg, 1e-2, 1e-2, &[32, 128, 32, 128, 32]).unwrap();
    let solver = PoissonSolver::new(grid, 16, Exec::Parallel).unwrap();
    (profile, setup, solver)
}

/// The band vorticity keeps its sign when the swirl is reversed, so only λ₀ is odd in B
/// and the mismatch `λ(B) + λ(-B)` is first order in ε.
#[test]
fn reversing_the_swirl_reverses_the_leading_rotation() {
    let mut mismatch = Vec::new();
    for eps in [1e-2, 5e-3] {
        let (_, plus, _) = weak_swirl_eps(0.1, eps);
        let (_, minus, _) = weak_swirl_eps(-0.1, eps);
        assert_eq!(plus.cfg.lambda0(), -minus.cfg.lambda0());
        let a = kernel::construct(&plus, 1).unwrap();
        let b = kernel::construct(&minus, 1).unwrap();
        assert!(a.lambda() > 0.0 && b.lambda() < 0.0);
        mismatch.push((a.lambda() + b.lambda()).abs());
    }
    let r = mismatch[0] / mismatch[1];
    assert!((1.6..2.6).contains(&r), "mismatch ratio {r}");
}

#[test]
fn execution_strategies_agree_bitwise() {
    let (profile, setup, solver) = weak_swirl(0.1);
    let eig = kernel::construct(&setup, 1).unwrap();
    let f = LevelSetPerturbation::from_eigen(&setup, &eig, 1e-3).unwrap();
    let par = functional_f(eig.lambda(), &f, &profile, &solver, Exec::Parallel).unwrap();
    let seq = functional_f(eig.lambda(), &f, &profile, &solver, Exec::Sequential).unwrap();
    assert_eq!(par.values, seq.values);
    let wp = build_vorticity(&f, &profile, &solver.grid, 16, Exec::Parallel).unwrap();
    let ws = build_vorticity(&f, &profile, &solver.grid, 16, Exec::Sequential).unwrap();
    assert_eq!(wp.values, ws.values);
}

#[test]
fn kernel_residual_and_mass_defect_are_second_order() {
    let (profile, setup, solver) = weak_swirl(0.1);
    let eig = kernel::construct(&setup, 1).unwrap();
    let zero = LevelSetPerturbation::zero(&setup);
    let mass0 = build_vorticity(&zero, &profile, &solver.grid, 16, Exec::Parallel).unwrap().mass(&solver.grid);
    let mut sup = Vec::new();
    let mut defect = Vec::new();
    for sigma in [1e-3, 5e-4] {
        let f = LevelSetPerturbation::from_eigen(&setup, &eig, sigma).unwrap();
        sup.push(functional_f(eig.lambda(), &f, &profile, &solver, Exec::Parallel).unwrap().sup());
        let w = build_vorticity(&f, &profile, &solver.grid, 16, Exec::Parallel).unwrap();
        defect.push((w.mass(&solver.grid) - mass0).abs());
    }
    let r = sup[0] / sup[1];
    assert!((3.0..5.0).contains(&r), "residual ratio {r}");
    let d = defect[0] / defect[1];
    assert!((3.0..5.0).contains(&d), "mass defect ratio {d}");
}
