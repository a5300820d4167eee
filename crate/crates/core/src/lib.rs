//! Single-channel Kohn variational workbench.
//!
//! The crate assembles Hamiltonian-residual integrals for an s-wave
//! short-range radial problem, builds the generalized (real) and complex
//! Kohn linear systems, and exposes the determinant-level description of the
//! phase shift as a function of the mixing phase `tau`:
//!
//! * [`model`] - potentials, basis functions and integral assembly.
//! * [`algebra`] - `tau` rotation, Kohn matrices, determinant coefficients.
//! * [`kohn_real`] - generalized Kohn solver, slope formula, `tau` optimization.
//! * [`kohn_complex`] - complex Kohn solver (K, T, S variants) and the
//!   equivalence check against the optimized real method.
//! * [`lmatrix`] - closed-block diagonalized (L-matrix) formalism.
//! * [`oracle`] - direct ODE phase shifts and brute-force small-basis algebra.
//! * [`scanner`] / [`verify`] - k-scans and identity verification suites.

pub mod algebra;
pub mod error;
pub mod kohn_complex;
pub mod kohn_real;
pub mod linalg;
pub mod lmatrix;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod scanner;
pub mod verify;

pub use error::{KohnError, Result};

pub use num_complex::Complex64;

use std::f64::consts::{FRAC_PI_2, PI};

/// Reduce an angle into the half-open branch `(-pi/2, pi/2]` used for every
/// reported phase shift.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x - PI * (x / PI).round();
    if y <= -FRAC_PI_2 {
        y += PI;
    } else if y > FRAC_PI_2 {
        y -= PI;
    }
    y
}

/// Reduce an angle into `[0, pi)`.
pub fn wrap_tau(x: f64) -> f64 {
    let y = x.rem_euclid(PI);
    // rem_euclid can round up to exactly PI
    if y >= PI {
        0.0
    } else {
        y
    }
}
