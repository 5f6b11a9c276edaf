// SPDX-License-Identifier: MIT OR Apache-2.0
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("annulus-rotor-e2e-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_annulus-rotor"));
    cmd.args(args).env_remove("ANNULUS_ROTOR_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn profile_dump_writes_fixed_header_and_17_digits() {
    let dir = scratch("profile");
    let out = run(&["profile-dump", "--out", dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir, "profile.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "r,varpi,varpi_prime,varpi_second,omega,psi0,dpsi0");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 7);
    for cell in first {
        let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{cell}");
    }
    assert!(read(&dir, "profile_report.txt").contains("status: ok"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = scratch("config");
    for bad in ["foo=1\n", "R1=1.7\n", "B=0\n", "kappa=2\n", "eps=x\n"] {
        let cfg = write_config(&dir, bad);
        let out = run(&["distance", "--config", &cfg, "--out", dir.to_str().unwrap()], &[]);
        assert_eq!(out.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["distance", "--config", "/nonexistent/file.cfg"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["no-such-subcommand"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_is_validated() {
    let dir = scratch("threads");
    let d = dir.to_str().unwrap();
    assert_eq!(run(&["distance", "--out", d], &[("ANNULUS_ROTOR_THREADS", "zero")]).status.code(), Some(2));
    assert_eq!(run(&["distance", "--out", d], &[("ANNULUS_ROTOR_THREADS", "1")]).status.code(), Some(0));
}

#[test]
fn default_config_has_no_eigenvalue() {
    let dir = scratch("noroot");
    let out = run(&["find-eigen", "--out", dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    let report = read(&dir, "eigen_report.txt");
    assert!(report.contains("no lambda1 root"), "{report}");
    assert!(read(&dir, "lambda1_scan.csv").starts_with("m,sup_I,lambda1,i_residual\n"));
}

#[test]
fn find_eigen_is_deterministic_across_execution_paths() {
    let dir = scratch("eigen");
    let cfg = write_config(&dir, "B=0.1\nM=3\n");
    let mut outputs = Vec::new();
    for (extra, env) in [(None, vec![]), (Some("--sequential"), vec![]), (None, vec![("ANNULUS_ROTOR_THREADS", "1")])] {
        let sub = dir.join(format!("run{}", outputs.len()));
        let mut args = vec!["find-eigen", "--config", &cfg, "--out", sub.to_str().unwrap()];
        args.extend(extra);
        let out = run(&args, &env);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((read(&sub, "eigen.csv"), read(&sub, "kernel_profile.csv")));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert!(outputs[0].0.starts_with("m,eps,kappa,lambda0,lambda1,lambda2,lambda,i_residual,contraction_ratio,iterations\n"));
}

#[test]
fn validate_kernel_and_transversality_succeed_on_weak_swirl() {
    let dir = scratch("kernel");
    let cfg = write_config(&dir, "B=0.1\nM=4\n");
    let d = dir.to_str().unwrap();
    for sub in ["validate-kernel", "adjoint", "transversality"] {
        let out = run(&[sub, "--config", &cfg, "--out", d, "--seed", "7"], &[]);
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(read(&dir, "kernel_modes.csv").starts_with("n,sigma_min,sigma_max,nonsingular\n"));
    assert!(read(&dir, "adjoint.csv").starts_with("band,z,adjoint,kernel\n"));
}

#[test]
fn residual_continue_distance_and_simulate() {
    let dir = scratch("pipeline");
    let cfg = write_config(&dir, "B=0.1\nnodes_per_panel=32\nn_theta=16\n");
    let d = dir.to_str().unwrap();
    for args in [
        vec!["residual"],
        vec!["continue", "--steps", "2"],
        vec!["distance"],
        vec!["simulate", "--T", "4", "--dt", "0.2", "--nr", "96", "--ntheta", "16", "--checkpoint-every", "5"],
    ] {
        let mut full = args.clone();
        full.extend(["--config", &cfg, "--out", d]);
        let out = run(&full, &[]);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(read(&dir, "continue.csv").starts_with("sigma,lambda,residual,full_residual,profile_gap,newton_iterations,h1_distance\n"));
    assert_eq!(read(&dir, "distance.csv").lines().count(), 13);
    let sim = read(&dir, "simulate.csv");
    assert!(sim.starts_with("t,lambda_meas,return_error,circulation,energy\n"));
    assert!(sim.lines().count() >= 5);
}

#[test]
fn cfl_violation_is_a_numeric_failure() {
    let dir = scratch("cfl");
    let cfg = write_config(&dir, "B=0.1\nnodes_per_panel=32\nn_theta=16\n");
    let out = run(
        &["simulate", "--config", &cfg, "--out", dir.to_str().unwrap(), "--T", "50", "--dt", "25", "--nr", "96", "--ntheta", "16"],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(read(&dir, "simulate_report.txt").contains("CFL"));
}
