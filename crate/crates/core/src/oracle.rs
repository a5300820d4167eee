//! Independent reference values: direct integration of the radial equation,
//! closed-form square-well and Born phase shifts, and cofactor-expanded
//! Kohn algebra for one or two closed functions.

use serde::{Deserialize, Serialize};

use crate::model::{ElementTable, Potential, RadialProblem};
use crate::quadrature::CompositeRule;
use crate::{wrap_phase, KohnError, Result};

/// Integration steps per unit of `r_max`: the default step is `r_max / 20000`.
pub const DEFAULT_STEP_DIVISOR: f64 = 20000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub eta_exact: f64,
    pub match_radius: f64,
    pub step: f64,
    pub richardson_error_estimate: f64,
}

/// `u'' = (2V - k²) u` from `u(0) = 0`, `u'(0) = 1` out to `radius`, with
/// RK4 steps no longer than `step` that never straddle a breakpoint.
fn integrate(potential: &Potential, k: f64, radius: f64, step: f64) -> (f64, f64) {
    let mut nodes = vec![0.0];
    nodes.extend(potential.breakpoints().into_iter().filter(|&b| b > 0.0 && b < radius));
    nodes.push(radius);
    let k2 = k * k;
    let accel = |r: f64, u: f64| (2.0 * potential.value(r) - k2) * u;
    let (mut u, mut du) = (0.0, 1.0);
    for seg in nodes.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        // evaluate V just inside the segment so a jump at `lo` or `hi` is not sampled twice
        let inside = |r: f64| r.clamp(lo + 1e-14 * hi.max(1.0), hi - 1e-14 * hi.max(1.0));
        for i in 0..n {
            let r = lo + i as f64 * h;
            let a1 = accel(inside(r), u);
            let (u2, d2) = (u + 0.5 * h * du, du + 0.5 * h * a1);
            let a2 = accel(inside(r + 0.5 * h), u2);
            let (u3, d3) = (u + 0.5 * h * d2, du + 0.5 * h * a2);
            let a3 = accel(inside(r + 0.5 * h), u3);
            let (u4, d4) = (u + h * d3, du + h * a3);
            let a4 = accel(inside(r + h), u4);
            u += h / 6.0 * (du + 2.0 * d2 + 2.0 * d3 + d4);
            du += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        }
    }
    (u, du)
}

fn matched_phase(k: f64, radius: f64, u: f64, du: f64) -> f64 {
    wrap_phase((k * u).atan2(du) - k * radius)
}

/// Phase shift by direct integration, matched at `match_radius`.
pub fn exact_phase_shift_with(problem: &RadialProblem, match_radius: f64, step: f64) -> Result<OracleResult> {
    problem.validate()?;
    let support = problem.potential.support_radius();
    if !(match_radius >= support) {
        return Err(KohnError::Oracle(format!(
            "match radius {match_radius} lies inside the potential support (radius {support})"
        )));
    }
    if !(step > 0.0) {
        return Err(KohnError::Oracle(format!("step must be > 0, got {step}")));
    }
    let k = problem.k;
    let coarse = {
        let (u, du) = integrate(&problem.potential, k, match_radius, step);
        matched_phase(k, match_radius, u, du)
    };
    let fine = {
        let (u, du) = integrate(&problem.potential, k, match_radius, 0.5 * step);
        matched_phase(k, match_radius, u, du)
    };
    let diff = wrap_phase(fine - coarse) / 15.0;
    Ok(OracleResult {
        eta_exact: wrap_phase(fine + diff),
        match_radius,
        step,
        richardson_error_estimate: diff.abs(),
    })
}

/// Phase shift by direct integration with the default step and the smallest
/// admissible match radius.
pub fn exact_phase_shift(problem: &RadialProblem) -> Result<OracleResult> {
    let radius = problem.potential.support_radius().max(1.0);
    exact_phase_shift_with(problem, radius, problem.r_max / DEFAULT_STEP_DIVISOR)
}

/// `η = atan2(k sin κa, κ cos κa) - ka` with `κ = √(k² + 2V₀)`.
pub fn square_well_phase(k: f64, depth: f64, radius: f64) -> f64 {
    let kappa = (k * k + 2.0 * depth).sqrt();
    wrap_phase((k * (kappa * radius).sin()).atan2(kappa * (kappa * radius).cos()) - k * radius)
}

/// First Born approximation, `tan η ≈ -(2/k) ∫ V sin²(kr) dr`.
pub fn born_phase(problem: &RadialProblem) -> f64 {
    let rule = CompositeRule::new(
        problem.potential.support_radius().max(1.0),
        problem.n_quad,
        &problem.potential.breakpoints(),
    );
    let k = problem.k;
    let integral = rule.integrate(|r| problem.potential.value(r) * (k * r).sin().powi(2));
    (-2.0 / k * integral).atan()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForceCoefficients {
    pub cal_a: f64,
    pub cal_b: f64,
    pub cal_c: f64,
    pub cal_at: f64,
    pub theta: f64,
    pub gamma: f64,
    /// Γ from the four determinants; `None` where `2Ã + B = 0`.
    pub gamma_det: Option<f64>,
    /// `(Ã - Γ)(Ã - Γ + B) + A C`.
    pub cal_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub tau: f64,
    pub eta_v: f64,
    /// `(f/g)` route at the same `tau`.
    pub eta_det: f64,
    pub coefficients: BruteForceCoefficients,
}

fn det_small(a: &[Vec<f64>]) -> f64 {
    match a.len() {
        0 => 1.0,
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        n => unreachable!("cofactor expansion limited to 3x3, got {n}"),
    }
}

struct Small {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    ss: f64,
    sc: f64,
    s_chi: Vec<f64>,
    k_tilde: f64,
}

fn small_system(t: &ElementTable, tau: f64) -> Small {
    let (s, c) = tau.sin_cos();
    // S̄ = c S + s C, C̄ = -s S + c C
    let ss = c * c * t.ss + c * s * (t.sc + t.cs) + s * s * t.cc;
    let sc = -c * s * t.ss + c * c * t.sc - s * s * t.cs + s * c * t.cc;
    let cs = -s * c * t.ss - s * s * t.sc + c * c * t.cs + c * s * t.cc;
    let cc = s * s * t.ss - s * c * (t.sc + t.cs) + c * c * t.cc;
    let m = t.m();
    let s_chi: Vec<f64> = (0..m).map(|j| c * t.s_chi[j] + s * t.c_chi[j]).collect();
    let c_chi: Vec<f64> = (0..m).map(|j| -s * t.s_chi[j] + c * t.c_chi[j]).collect();
    let mut a = vec![vec![0.0; m + 1]; m + 1];
    let mut b = vec![0.0; m + 1];
    a[0][0] = cc;
    b[0] = cs;
    for j in 0..m {
        a[0][j + 1] = c_chi[j];
        a[j + 1][0] = c_chi[j];
        b[j + 1] = s_chi[j];
        for i in 0..m {
            a[i + 1][j + 1] = t.chi_chi[i][j];
        }
    }
    Small {
        a,
        b,
        ss,
        sc,
        s_chi,
        k_tilde: t.k_tilde,
    }
}

fn with_column(a: &[Vec<f64>], col: usize, v: &[f64]) -> Vec<Vec<f64>> {
    let mut out = a.to_vec();
    for (row, x) in out.iter_mut().zip(v) {
        row[col] = *x;
    }
    out
}

/// Everything the main pipeline computes, redone by explicit cofactor
/// expansion and Cramer's rule for `M ≤ 2`.
pub fn brute_force_small_m(table: &ElementTable, tau: f64) -> Result<BruteForce> {
    let m = table.m();
    if m > 2 {
        return Err(KohnError::Domain(format!("cofactor expansion needs M <= 2, got {m}")));
    }
    let det_a = |t: f64| det_small(&small_system(table, t).a);
    let det_at = |t: f64| {
        let sys = small_system(table, t);
        let neg: Vec<f64> = sys.b.iter().map(|v| -v).collect();
        det_small(&with_column(&sys.a, 0, &neg))
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let cal_c = det_a(0.0);
    let cal_a = det_a(half_pi);
    let cal_b = 2.0 * det_a(0.5 * half_pi) - cal_a - cal_c;
    let cal_at = det_at(half_pi);

    let sys = small_system(table, tau);
    let d = det_small(&sys.a);
    if d == 0.0 {
        return Err(KohnError::Singularity { tau, what: "det(A) = 0" });
    }
    let neg: Vec<f64> = sys.b.iter().map(|v| -v).collect();
    let x: Vec<f64> = (0..=m).map(|j| det_small(&with_column(&sys.a, j, &neg)) / d).collect();
    let i_value = sys.ss + x[0] * sys.sc + (0..m).map(|j| x[j + 1] * sys.s_chi[j]).sum::<f64>();
    let eta_v = wrap_phase(tau + (x[0] - i_value / sys.k_tilde).atan());
    let theta = d * i_value;
    let gamma = theta / sys.k_tilde;
    let denom = 2.0 * cal_at + cal_b;
    let gamma_det = (denom != 0.0).then(|| ((cal_at + cal_b) * cal_at + cal_a * cal_c) / denom);
    let shifted = cal_at - gamma;
    let eta_det = wrap_phase(tau + ((det_at(tau) - gamma) / d).atan());
    Ok(BruteForce {
        tau,
        eta_v,
        eta_det,
        coefficients: BruteForceCoefficients {
            cal_a,
            cal_b,
            cal_c,
            cal_at,
            theta,
            gamma,
            gamma_det,
            cal_g: shifted * (shifted + cal_b) + cal_a * cal_c,
        },
    })
}
