//! The generalized (real) Kohn method: linear-system and determinant routes
//! to the phase shift, its `tau` derivative, and the choice of `tau`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algebra::{ConditionedTable, DetCoefficients, KohnSystem, CONDITION_LIMIT};
use crate::linalg;
use crate::model::ElementTable;
use crate::{wrap_phase, wrap_tau, KohnError, Result};

/// `|Γ|` below this fraction of the coefficient scale counts as Γ = 0.
pub const GAMMA_FLOOR: f64 = 1e-11;
/// `√(X² + Y²)` below this fraction of the squared scale counts as X = Y = 0.
pub const XY_FLOOR: f64 = 1e-12;
/// Singular `tau` with `f²/Γ²` above this are anomaly-free.
pub const ANOMALY_FREE_RATIO: f64 = 10.0;
/// Singular `tau` with `f²/Γ²` below this are anomalous.
pub const ANOMALOUS_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSolution {
    pub tau: f64,
    pub a_t: f64,
    pub p: Vec<f64>,
    /// Reduced functional `<S̄,S̄> + a_t <S̄,C̄> + Σ p_j <S̄,χ_j>`.
    pub i_value: f64,
    /// Phase shift in `(-π/2, π/2]`.
    pub eta_v: f64,
    /// `tau + atan(tan(η - τ))`, continuous in `tau` between singularities.
    pub eta_unwrapped: f64,
    pub det_a: f64,
    pub det_a_tilde: f64,
    pub condition_estimate: f64,
}

/// Solve `A x = -b` and form the Kohn estimate `tan(η - τ) = a_t - I / k̃`.
pub fn solve_generalized(system: &KohnSystem, table: &ElementTable) -> Result<GeneralizedSolution> {
    let tau = system.tau;
    let det_a = system.det_a();
    let condition = linalg::condition_estimate(&system.a);
    if linalg::numerically_singular(det_a.abs(), condition, CONDITION_LIMIT) {
        return Err(KohnError::SingularSystem {
            tau,
            det: det_a,
            condition,
        });
    }
    let rhs: DVector<f64> = -&system.b;
    let x = linalg::solve(&system.a, &rhs).ok_or(KohnError::SingularSystem {
        tau,
        det: det_a,
        condition: f64::INFINITY,
    })?;
    let rt = crate::algebra::rotate_any(table, tau);
    let a_t = x[0];
    let p: Vec<f64> = x.iter().skip(1).copied().collect();
    let i_value = rt.ss + a_t * rt.sc + p.iter().zip(&rt.s_chi).map(|(pj, v)| pj * v).sum::<f64>();
    let t = a_t - i_value / table.k_tilde;
    let eta_unwrapped = tau + t.atan();
    Ok(GeneralizedSolution {
        tau,
        a_t,
        p,
        i_value,
        eta_v: wrap_phase(eta_unwrapped),
        eta_unwrapped,
        det_a,
        det_a_tilde: system.det_a_tilde(),
        condition_estimate: condition,
    })
}

/// Rotate, build and solve at one `tau`, working in the conditioned closed
/// basis; `p`, `det_a` and `det_a_tilde` are reported for the source basis.
pub fn solve_at(table: &ElementTable, tau: f64) -> Result<GeneralizedSolution> {
    solve_conditioned(&ConditionedTable::new(table), tau)
}

pub(crate) fn solve_conditioned(ct: &ConditionedTable, tau: f64) -> Result<GeneralizedSolution> {
    let mut sol = solve_generalized(&ct.system_at(tau), &ct.table)?;
    sol.p = ct.source_coefficients(&sol.p);
    sol.det_a *= ct.det_scale;
    sol.det_a_tilde *= ct.det_scale;
    Ok(sol)
}

/// Kohn functional `<Ψ,Ψ>` for arbitrary trial coefficients, from the full
/// quadratic form rather than the reduced expression.
pub fn trial_functional(table: &ElementTable, tau: f64, a_t: f64, p: &[f64]) -> f64 {
    let rt = crate::algebra::rotate_any(table, tau);
    let mut v = rt.ss + a_t * (rt.sc + rt.cs) + a_t * a_t * rt.cc;
    for (i, pi) in p.iter().enumerate() {
        v += pi * (rt.s_chi[i] + rt.s_chi[i]) + a_t * pi * (rt.c_chi[i] + rt.c_chi[i]);
        for (j, pj) in p.iter().enumerate() {
            v += pi * pj * rt.chi_chi[i][j];
        }
    }
    v
}

/// `tan(η - τ) = [(A - C) sinτ cosτ + B cos²τ + D] / g(τ)`.
pub fn eta_via_determinants(coeffs: &DetCoefficients, tau: f64) -> Result<f64> {
    let g = coeffs.g(tau);
    if g == 0.0 || g.abs() <= 1e-15 * coeffs.scale() {
        return Err(KohnError::Singularity { tau, what: "det(A) = 0" });
    }
    let (s, c) = tau.sin_cos();
    let num = coeffs.cal_bt * s * c + coeffs.cal_b * c * c + coeffs.cal_d;
    Ok(wrap_phase(tau + (num / g).atan()))
}

/// `∂η/∂τ = Γ² / (f² + g²)`.
pub fn slope(coeffs: &DetCoefficients, tau: f64) -> Result<f64> {
    let f = coeffs.f(tau);
    let g = coeffs.g(tau);
    let den = f * f + g * g;
    if den == 0.0 {
        return Err(KohnError::Singularity { tau, what: "f = g = 0" });
    }
    Ok(coeffs.gamma * coeffs.gamma / den)
}

/// Richardson-extrapolated five-point central difference (sixth order).
pub fn central_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let five = |h: f64| (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h);
    let coarse = five(h);
    let fine = five(0.5 * h);
    (16.0 * fine - coarse) / 15.0
}

/// A difference step small against the local width of `η(τ)`'s features,
/// `√(f² + g²) / √(f'² + g'²)`, capped at `1e-3`.
pub fn difference_step(coeffs: &DetCoefficients, tau: f64) -> f64 {
    let (f, g) = (coeffs.f(tau), coeffs.g(tau));
    let (fp, gp) = (coeffs.f_prime(tau), coeffs.g_prime(tau));
    let width = f.hypot(g) / fp.hypot(gp).max(f64::MIN_POSITIVE);
    (0.05 * width).min(1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    None,
    /// Γ = 0: the phase shift does not depend on `tau`.
    KG,
    /// X = Y = 0: the slope does not depend on `tau`.
    KH,
}

impl Degeneracy {
    pub fn label(&self) -> &'static str {
        match self {
            Degeneracy::None => "none",
            Degeneracy::KG => "k_g",
            Degeneracy::KH => "k_h",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityClass {
    Anomalous,
    Marginal,
    AnomalyFree,
}

impl SingularityClass {
    pub fn from_ratio(ratio: f64) -> Self {
        if ratio > ANOMALY_FREE_RATIO {
            SingularityClass::AnomalyFree
        } else if ratio < ANOMALOUS_RATIO {
            SingularityClass::Anomalous
        } else {
            SingularityClass::Marginal
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SingularityClass::Anomalous => "anomalous",
            SingularityClass::Marginal => "marginal",
            SingularityClass::AnomalyFree => "anomaly-free",
        }
    }
}

/// A root of `det A(τ)` with the ratio `f²/Γ²` deciding its character.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularTau {
    pub tau: f64,
    pub ratio: f64,
    pub class: SingularityClass,
}

/// The slope-minimizing and slope-maximizing `tau` and their phase shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauOptimum {
    pub tau0: f64,
    pub tau1: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub slope_at_tau0: f64,
    pub slope_at_tau1: f64,
    /// Whether the third-derivative sign picks the same minimizer.
    pub third_derivative_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauAnalysis {
    pub optimum: Option<TauOptimum>,
    pub singular_taus: Vec<SingularTau>,
    pub degenerate: Degeneracy,
}

pub fn degeneracy(coeffs: &DetCoefficients) -> Degeneracy {
    let scale = coeffs.scale();
    if coeffs.gamma.abs() <= GAMMA_FLOOR * scale {
        Degeneracy::KG
    } else if coeffs.cal_x.hypot(coeffs.cal_y) <= XY_FLOOR * scale * scale {
        Degeneracy::KH
    } else {
        Degeneracy::None
    }
}

/// Roots of `g(τ) = A sin²τ + B sinτ cosτ + C cos²τ` in `[0, π)`, ascending.
pub fn singular_tau_values(coeffs: &DetCoefficients) -> Vec<f64> {
    // g = m + R cos(2τ - φ)
    let m = 0.5 * (coeffs.cal_a + coeffs.cal_c);
    let half_diff = 0.5 * (coeffs.cal_c - coeffs.cal_a);
    let half_b = 0.5 * coeffs.cal_b;
    let r = half_diff.hypot(half_b);
    if r == 0.0 || m.abs() > r {
        return Vec::new();
    }
    let phi = half_b.atan2(half_diff);
    let w = (-m / r).clamp(-1.0, 1.0).acos();
    let mut roots = vec![wrap_tau(0.5 * (phi + w))];
    if w > 0.0 && w < std::f64::consts::PI {
        roots.push(wrap_tau(0.5 * (phi - w)));
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup();
    roots
}

pub fn classify_singular_taus(coeffs: &DetCoefficients) -> Vec<SingularTau> {
    let g2 = coeffs.gamma * coeffs.gamma;
    singular_tau_values(coeffs)
        .into_iter()
        .map(|tau| {
            let f = coeffs.f(tau);
            let ratio = if g2 > 0.0 { f * f / g2 } else { f64::INFINITY };
            SingularTau {
                tau,
                ratio,
                class: SingularityClass::from_ratio(ratio),
            }
        })
        .collect()
}

/// `tan(η⁽ⁱ⁾ - τᵢ) = (2Ã + B - 2Γ) / (A + C)` at an extremum of the slope.
pub fn eta_at_extremum(coeffs: &DetCoefficients, tau_i: f64) -> f64 {
    let num = 2.0 * coeffs.cal_at + coeffs.cal_b - 2.0 * coeffs.gamma;
    let den = coeffs.cal_a + coeffs.cal_c;
    let offset = if den == 0.0 { FRAC_PI_2 } else { (num / den).atan() };
    wrap_phase(tau_i + offset)
}

/// Locate the extrema of `∂η/∂τ` and classify the singular `tau`.
pub fn optimize_tau(coeffs: &DetCoefficients) -> TauAnalysis {
    let degenerate = degeneracy(coeffs);
    let singular_taus = classify_singular_taus(coeffs);
    if degenerate != Degeneracy::None {
        return TauAnalysis {
            optimum: None,
            singular_taus,
            degenerate,
        };
    }
    // X sin 2τ + Y cos 2τ = 0
    let ta = wrap_tau(0.5 * f64::atan2(-coeffs.cal_y, coeffs.cal_x));
    let tb = wrap_tau(ta + FRAC_PI_2);
    let sa = slope(coeffs, ta).unwrap_or(f64::INFINITY);
    let sb = slope(coeffs, tb).unwrap_or(f64::INFINITY);
    let (tau0, tau1, s0, s1) = if sa <= sb { (ta, tb, sa, sb) } else { (tb, ta, sb, sa) };
    // the slope has a minimum where X cos 2τ - Y sin 2τ < 0
    let third = |t: f64| {
        let (s2, c2) = (2.0 * t).sin_cos();
        coeffs.cal_x * c2 - coeffs.cal_y * s2
    };
    let third_derivative_agrees = third(tau0) < 0.0 && third(tau1) > 0.0;
    TauAnalysis {
        optimum: Some(TauOptimum {
            tau0,
            tau1,
            eta0: eta_at_extremum(coeffs, tau0),
            eta1: eta_at_extremum(coeffs, tau1),
            slope_at_tau0: s0,
            slope_at_tau1: s1,
            third_derivative_agrees,
        }),
        singular_taus,
        degenerate,
    }
}

/// Stationary points of `det A(τ)` and the number of sign changes they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDet {
    pub tau_d1: f64,
    pub tau_d2: f64,
    pub det1: f64,
    pub det2: f64,
    pub singularity_count: usize,
}

pub fn stationary_det_taus(coeffs: &DetCoefficients) -> Result<StationaryDet> {
    let scale = coeffs.scale();
    if coeffs.cal_bt.hypot(coeffs.cal_b) <= XY_FLOOR * scale {
        return Err(KohnError::Degenerate(
            "A = C and B = 0: det(A) does not depend on tau".into(),
        ));
    }
    let (tau_d1, tau_d2) = crate::algebra::stationary_pair(coeffs.cal_a, coeffs.cal_b, coeffs.cal_c);
    let det1 = coeffs.g(tau_d1);
    let det2 = coeffs.g(tau_d2);
    let zero = 1e-12 * scale;
    let singularity_count = if det1.abs() <= zero || det2.abs() <= zero {
        1
    } else if det1.signum() == det2.signum() {
        0
    } else {
        2
    };
    Ok(StationaryDet {
        tau_d1,
        tau_d2,
        det1,
        det2,
        singularity_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::extract_det_coefficients;
    use crate::model::{assemble_elements, BasisSet, Potential, RadialProblem};
    use std::f64::consts::PI;

    fn table(k: f64, m: usize) -> ElementTable {
        assemble_elements(
            &RadialProblem::square_well_default(k),
            &BasisSet::default_family(m).unwrap(),
        )
        .unwrap()
    }

    fn zero_table(k: f64) -> ElementTable {
        assemble_elements(&RadialProblem::new(Potential::Zero, k), &BasisSet::default_family(8).unwrap()).unwrap()
    }

    #[test]
    fn zero_potential_gives_zero_phase() {
        let t = zero_table(0.5);
        let s = solve_at(&t, 0.0).unwrap();
        assert!(s.a_t.abs() < 1e-12);
        assert!(s.p.iter().all(|v| v.abs() < 1e-12));
        assert!(s.eta_v.abs() < 1e-12);
        let s = solve_at(&t, 0.4).unwrap();
        assert!((s.a_t + 0.4f64.tan()).abs() < 1e-10);
        assert!(s.eta_v.abs() < 1e-12);
    }

    #[test]
    fn cramer_rule_holds() {
        let t = table(0.5, 8);
        for tau in [0.2, 1.1, 2.5] {
            let s = solve_at(&t, tau).unwrap();
            assert!((s.a_t * s.det_a - s.det_a_tilde).abs() < 1e-10 * s.det_a_tilde.abs().max(s.det_a.abs()));
        }
    }

    #[test]
    fn reduced_functional_matches_full_form_at_solution() {
        let t = table(0.5, 8);
        let s = solve_at(&t, 0.9).unwrap();
        let full = trial_functional(&t, 0.9, s.a_t, &s.p);
        assert!((full - s.i_value).abs() < 1e-9 * t.scale());
    }

    #[test]
    fn estimate_is_second_order_in_coefficient_error() {
        let t = table(0.5, 8);
        let tau = 0.9;
        let s = solve_at(&t, tau).unwrap();
        let tan_at = |da: f64| {
            let a = s.a_t + da;
            let p: Vec<f64> = s.p.iter().map(|v| v + da).collect();
            a - trial_functional(&t, tau, a, &p) / t.k_tilde
        };
        let base = tan_at(0.0);
        let d1 = (tan_at(1e-3) - base).abs();
        let d2 = (tan_at(2e-3) - base).abs();
        assert!((d2 / d1 - 4.0).abs() < 0.05, "ratio {}", d2 / d1);
    }

    #[test]
    fn determinant_route_matches_linear_route() {
        let t = table(0.5, 8);
        let d = extract_det_coefficients(&t).unwrap();
        for i in 0..16 {
            let tau = PI * (i as f64 + 0.37) / 16.0;
            let lin = solve_at(&t, tau).unwrap().eta_v;
            let det = eta_via_determinants(&d, tau).unwrap();
            let diff = wrap_phase(lin - det).abs();
            assert!(diff < 1e-9, "tau={tau}: {lin} vs {det}");
        }
    }

    #[test]
    fn determinant_route_without_correlation_functions() {
        let t = table(0.5, 0);
        let d = extract_det_coefficients(&t).unwrap();
        let eta = eta_via_determinants(&d, 0.0).unwrap();
        let expected = wrap_phase(((d.cal_b + d.cal_d) / d.cal_c).atan());
        assert!((eta - expected).abs() < 1e-14);
    }

    #[test]
    fn slope_matches_difference_quotient() {
        let t = table(0.5, 8);
        let d = extract_det_coefficients(&t).unwrap();
        for i in 0..16 {
            let tau = PI * (i as f64 + 0.5) / 16.0;
            let eta = |x: f64| solve_at(&t, x).unwrap().eta_unwrapped;
            let fd = central_derivative(eta, tau, difference_step(&d, tau));
            let an = slope(&d, tau).unwrap();
            assert!((fd - an).abs() < 1e-6 * an.max(1e-3), "tau={tau}: {fd} vs {an}");
        }
    }

    #[test]
    fn ff_plus_gg_identities() {
        let d = extract_det_coefficients(&table(0.7, 8)).unwrap();
        let s2 = d.scale() * d.scale();
        for i in 0..32 {
            let tau = PI * i as f64 / 32.0 + 0.01;
            let (f, g, fp, gp) = (d.f(tau), d.g(tau), d.f_prime(tau), d.g_prime(tau));
            assert!((f * fp + g * gp - d.xy_form(tau)).abs() < 1e-10 * s2);
            assert!((f * f + g * g + g * fp - f * gp - d.gamma * d.gamma).abs() < 1e-8 * s2);
        }
    }

    #[test]
    fn optimizer_structure() {
        let d = extract_det_coefficients(&table(0.5, 8)).unwrap();
        let a = optimize_tau(&d);
        let o = a.optimum.unwrap();
        let sep = wrap_tau(o.tau1 - o.tau0);
        assert!((sep - FRAC_PI_2).abs() < 1e-12);
        assert!(((o.eta1 - o.eta0).abs() - FRAC_PI_2).abs() < 1e-9);
        let via29 = eta_via_determinants(&d, o.tau0).unwrap();
        assert!(wrap_phase(o.eta0 - via29).abs() < 1e-9);
        assert!(o.slope_at_tau0 <= o.slope_at_tau1);
        assert!(o.third_derivative_agrees);
        for i in 0..200 {
            let tau = PI * i as f64 / 200.0;
            if let Ok(s) = slope(&d, tau) {
                assert!(s >= o.slope_at_tau0 * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn zero_potential_is_gamma_degenerate() {
        let d = extract_det_coefficients(&zero_table(0.5)).unwrap();
        let a = optimize_tau(&d);
        assert_eq!(a.degenerate, Degeneracy::KG);
        assert!(a.optimum.is_none());
        assert!(slope(&d, 0.3).unwrap() < 1e-20);
    }

    #[test]
    fn singular_roots_are_zeros_of_g() {
        let mut d = extract_det_coefficients(&table(0.5, 8)).unwrap();
        // force two sign changes
        d.cal_a = -2.0 * d.scale();
        d.cal_c = -d.cal_a;
        d.cal_bt = d.cal_a - d.cal_c;
        let roots = singular_tau_values(&d);
        assert_eq!(roots.len(), 2);
        for r in &roots {
            assert!(d.g(*r).abs() < 1e-12 * d.scale());
        }
        assert_eq!(stationary_det_taus(&d).unwrap().singularity_count, 2);
    }

    #[test]
    fn stationary_pair_separation() {
        let d = extract_det_coefficients(&table(0.3, 8)).unwrap();
        let st = stationary_det_taus(&d).unwrap();
        assert!((st.tau_d2 - st.tau_d1 - FRAC_PI_2).abs() < 1e-14);
        assert!(d.g_prime(st.tau_d1).abs() < 1e-12 * d.scale());
        assert_eq!(st.singularity_count, singular_tau_values(&d).len());
    }

    #[test]
    fn single_channel_well_without_closed_functions() {
        // M = 0, attractive well: count follows the extrema signs
        let d = extract_det_coefficients(&table(0.5, 0)).unwrap();
        let st = stationary_det_taus(&d).unwrap();
        let expected = if st.det1 * st.det2 > 0.0 { 0 } else { 2 };
        assert_eq!(st.singularity_count, expected);
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(SingularityClass::from_ratio(11.0), SingularityClass::AnomalyFree);
        assert_eq!(SingularityClass::from_ratio(0.05), SingularityClass::Anomalous);
        assert_eq!(SingularityClass::from_ratio(1.0), SingularityClass::Marginal);
    }
}
