// SPDX-License-Identifier: MIT OR Apache-2.0
//! Rotating waves of the 2D Euler equations near Taylor-Couette flow in an annulus.
//!
//! The crate builds the smooth two-band vorticity profile, solves the annular Poisson
//! problem mode by mode, assembles the rescaled band operators and their adjoints,
//! constructs the kernel of the linearized operator through an asymptotic expansion
//! plus a fixed-point correction, evaluates the nonlinear level-set functional,
//! continues the bifurcating branch, and verifies rigid rotation by direct simulation.

pub mod cli;
pub mod domain;
pub mod error;
pub mod eulersim;
pub mod kernel;
pub mod linop;
pub mod nonlinear;
pub mod par;
pub mod poisson;
pub mod profile;
pub mod quad;

pub use domain::{AnnulusConfig, BaseFlow};
pub use error::{Error, Result};
pub use par::Exec;
pub use profile::Profile;
