//! The complex Kohn method in its K-, T- and S-matrix forms, and the
//! comparison with the optimized real method.
//!
//! All matrix elements are bilinear: the bra function is never conjugated.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, ConditionedTable, DetCoefficients, RotatedTable, CONDITION_LIMIT};
use crate::kohn_real::{self, Degeneracy};
use crate::linalg;
use crate::model::ElementTable;
use crate::{wrap_phase, KohnError, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Which outgoing-wave boundary function the trial function carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `S̄ + a (S̄ + i C̄)`.
    K,
    /// `S̄ + a (C̄ + i S̄)`.
    T,
    /// `(C̄ - i S̄) - a (C̄ + i S̄)`.
    S,
}

impl Variant {
    /// Coefficients of `(S̄, C̄)` in the fixed function `F` and in the
    /// function `G` multiplying the unknown.
    fn open_functions(self) -> ([Complex64; 2], [Complex64; 2]) {
        match self {
            Variant::K => ([ONE, 0.0.into()], [ONE, I]),
            Variant::T => ([ONE, 0.0.into()], [I, ONE]),
            Variant::S => ([-I, ONE], [-I, -ONE]),
        }
    }

    /// `tan(η - τ)` from the variational estimate `a_v`.
    fn tangent(self, a_v: Complex64) -> Complex64 {
        match self {
            Variant::K => I * a_v / (ONE + a_v),
            Variant::T => a_v / (ONE + I * a_v),
            Variant::S => I * (ONE - a_v) / (ONE + a_v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSolution {
    pub variant: Variant,
    pub tau: f64,
    pub a_t: Complex64,
    /// Closed-function coefficients in the source basis.
    pub p: Vec<Complex64>,
    /// Reduced functional `<F,F> + a <F,G> + Σ p_j <F,χ_j>`.
    pub i_value: Complex64,
    /// Variational estimate `a_t - I / (<F,G> - <G,F>)`.
    pub a_v: Complex64,
    /// Phase-shift estimate; real part in `(-π/2, π/2]`.
    pub eta_v: Complex64,
    pub det_a_c: Complex64,
    pub det_a_tilde_c: Complex64,
    pub condition_estimate: f64,
}

fn bilinear(x: [Complex64; 2], y: [Complex64; 2], rt: &RotatedTable) -> Complex64 {
    x[0] * y[0] * rt.ss + x[0] * y[1] * rt.sc + x[1] * y[0] * rt.cs + x[1] * y[1] * rt.cc
}

fn with_chi(x: [Complex64; 2], rt: &RotatedTable, j: usize) -> Complex64 {
    x[0] * rt.s_chi[j] + x[1] * rt.c_chi[j]
}

fn wrap_complex(z: Complex64) -> Complex64 {
    Complex64::new(wrap_phase(z.re), z.im)
}

/// The complex Kohn matrix `A'`, right-hand side `b'` and the rotated table.
pub fn build_complex_system(table: &ElementTable, tau: f64, variant: Variant) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let rt = algebra::rotate_any(table, tau);
    let (f, g) = variant.open_functions();
    let m = rt.m();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut b = DVector::zeros(m + 1);
    a[(0, 0)] = bilinear(g, g, &rt);
    b[0] = bilinear(g, f, &rt);
    for j in 0..m {
        let gc = with_chi(g, &rt, j);
        a[(0, j + 1)] = gc;
        a[(j + 1, 0)] = gc;
        b[j + 1] = with_chi(f, &rt, j);
        for i in 0..m {
            a[(i + 1, j + 1)] = rt.chi_chi[i][j].into();
        }
    }
    (a, b)
}

fn solve_in(table: &ElementTable, tau: f64, variant: Variant) -> Result<ComplexSolution> {
    let (a, b) = build_complex_system(table, tau, variant);
    let det_a_c = linalg::det(&a);
    let condition = linalg::condition_estimate(&a);
    if linalg::numerically_singular(det_a_c.norm(), condition, CONDITION_LIMIT) {
        return Err(KohnError::SingularComplexSystem {
            tau,
            det_abs: det_a_c.norm(),
        });
    }
    let rhs = -&b;
    let x = linalg::solve(&a, &rhs).ok_or(KohnError::SingularComplexSystem {
        tau,
        det_abs: det_a_c.norm(),
    })?;
    let mut a_tilde = a.clone();
    a_tilde.set_column(0, &rhs);
    let det_a_tilde_c = linalg::det(&a_tilde);

    let rt = algebra::rotate_any(table, tau);
    let (f, g) = variant.open_functions();
    let a_t = x[0];
    let p: Vec<Complex64> = x.iter().skip(1).copied().collect();
    let i_value = bilinear(f, f, &rt)
        + a_t * bilinear(f, g, &rt)
        + p.iter()
            .enumerate()
            .map(|(j, pj)| pj * with_chi(f, &rt, j))
            .sum::<Complex64>();
    let wronskian = bilinear(f, g, &rt) - bilinear(g, f, &rt);
    let a_v = a_t - i_value / wronskian;
    let tangent = variant.tangent(a_v);
    let eta_v = wrap_complex(tau + tangent.atan());
    Ok(ComplexSolution {
        variant,
        tau,
        a_t,
        p,
        i_value,
        a_v,
        eta_v,
        det_a_c,
        det_a_tilde_c,
        condition_estimate: condition,
    })
}

pub(crate) fn solve_complex_conditioned(ct: &ConditionedTable, tau: f64, variant: Variant) -> Result<ComplexSolution> {
    let mut sol = solve_in(&ct.table, tau, variant)?;
    let m = sol.p.len();
    sol.p = (0..m)
        .map(|i| (0..m).map(|f| sol.p[f] * ct.transform[(f, i)]).sum())
        .collect();
    sol.det_a_c *= ct.det_scale;
    sol.det_a_tilde_c *= ct.det_scale;
    Ok(sol)
}

/// Solve the complex Kohn equations `A' x' = -b'` at one `tau`.
pub fn solve_complex(table: &ElementTable, tau: f64, variant: Variant) -> Result<ComplexSolution> {
    if !(0.0..PI).contains(&tau) {
        return Err(KohnError::Domain(format!("tau must lie in [0, pi), got {tau}")));
    }
    solve_complex_conditioned(&ConditionedTable::new(table), tau, variant)
}

/// The T- and S-matrix solutions obtained algebraically from a K-matrix one.
///
/// The T-form trial function is the complex conjugate of the K-form one with
/// the outgoing function rescaled by `i`, so `a^T = -i (a')*`, `p^T = (p')*`
/// and `I^T = (I')*`; the S form is the T form times `-2i` with
/// `a^S = 1 + 2i a^T`.
pub fn transform_from_k(k: &ComplexSolution, k_tilde: f64) -> (ComplexSolution, ComplexSolution) {
    assert_eq!(k.variant, Variant::K);
    let a_t = -I * k.a_t.conj();
    let p: Vec<Complex64> = k.p.iter().map(|v| v.conj()).collect();
    let i_value = k.i_value.conj();
    let a_v = a_t - i_value / k_tilde;
    let t = ComplexSolution {
        variant: Variant::T,
        tau: k.tau,
        a_t,
        p,
        i_value,
        a_v,
        eta_v: wrap_complex(k.tau + Variant::T.tangent(a_v).atan()),
        det_a_c: f64::NAN.into(),
        det_a_tilde_c: f64::NAN.into(),
        condition_estimate: f64::NAN,
    };
    let scale = Complex64::new(0.0, -2.0);
    let a_s = ONE + 2.0 * I * t.a_t;
    let i_s = scale * scale * t.i_value;
    let a_sv = a_s - i_s / (2.0 * I * k_tilde);
    let s = ComplexSolution {
        variant: Variant::S,
        tau: k.tau,
        a_t: a_s,
        p: t.p.iter().map(|v| scale * v).collect(),
        i_value: i_s,
        a_v: a_sv,
        eta_v: wrap_complex(k.tau + Variant::S.tangent(a_sv).atan()),
        det_a_c: f64::NAN.into(),
        det_a_tilde_c: f64::NAN.into(),
        condition_estimate: f64::NAN,
    };
    (t, s)
}

/// `det A' = (A - C - iB) e^{-2iτ}`.
pub fn det_a_prime(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    Complex64::new(coeffs.cal_bt, -coeffs.cal_b) * Complex64::from_polar(1.0, -2.0 * tau)
}

/// `det Ã' = (iÃ - C) + (C - A + iB) cosτ e^{-iτ}`.
pub fn det_a_tilde_prime(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    Complex64::new(-coeffs.cal_c, coeffs.cal_at)
        + Complex64::new(-coeffs.cal_bt, coeffs.cal_b) * tau.cos() * Complex64::from_polar(1.0, -tau)
}

/// `u(τ) = -iC - Ã + (iC - iA - B) cosτ e^{-iτ} + Γ`.
pub fn u_of(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    Complex64::new(-coeffs.cal_at + coeffs.gamma, -coeffs.cal_c)
        + Complex64::new(-coeffs.cal_b, -coeffs.cal_bt) * tau.cos() * Complex64::from_polar(1.0, -tau)
}

/// `v(τ) = (A - C - iB) e^{-2iτ} - i u(τ)`.
pub fn v_of(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    det_a_prime(coeffs, tau) - I * u_of(coeffs, tau)
}

pub fn u_prime(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    // d/dτ [cosτ e^{-iτ}] = -(sinτ + i cosτ) e^{-iτ}
    let e = Complex64::from_polar(1.0, -tau);
    let d = -(tau.sin() + I * tau.cos()) * e;
    Complex64::new(-coeffs.cal_b, -coeffs.cal_bt) * d
}

pub fn v_prime(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    -2.0 * I * det_a_prime(coeffs, tau) - I * u_prime(coeffs, tau)
}

/// `u² + v² + v u' - u v'`, which vanishes identically.
pub fn uv_identity(coeffs: &DetCoefficients, tau: f64) -> Complex64 {
    let (u, v) = (u_of(coeffs, tau), v_of(coeffs, tau));
    u * u + v * v + v * u_prime(coeffs, tau) - u * v_prime(coeffs, tau)
}

/// `η' = τ + atan(u / v)` from the four determinants, without any solve.
pub fn eta_complex_via_determinants(coeffs: &DetCoefficients, tau: f64) -> Result<Complex64> {
    let v = v_of(coeffs, tau);
    if v.norm() <= 1e-15 * coeffs.scale() {
        return Err(KohnError::Singularity { tau, what: "v = 0" });
    }
    Ok(wrap_complex(tau + (u_of(coeffs, tau) / v).atan()))
}

/// Residuals of the relations among the K, T and S estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantRelations {
    /// `|a^S_v - (1 + 2i a^T_v)|` from the direct solves.
    pub s_relation_defect: f64,
    /// `|a^T_v - i (a'_v)*|`, the relation in the form usually quoted.
    pub t_relation_defect: f64,
    /// `|a^T_v + i (a'_v)*|`, the form that holds for the bilinear product.
    pub t_conjugate_relation_defect: f64,
    /// `|Im η^T + Im η'|`.
    pub t_imag_defect: f64,
    /// Largest gap between the direct and transformed T/S estimates.
    pub transform_route_defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentDefects {
    /// Worst relative gap between `tan(η⁽ⁱ⁾ - η' - τᵢ + τ)` and `(a + iΓ²)/b`.
    pub relative_defect: f64,
    /// Whether `Im tan(...) < 0` held at every sample.
    pub imaginary_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub k: f64,
    pub eta0: f64,
    pub eta_c: Complex64,
    pub slope_at_tau0: f64,
    /// `|Re η' - η⁽⁰⁾|`.
    pub re_match_defect: f64,
    /// `|Im η' - atanh(slope(τ₀))|`, or `|tanh Im η' - slope|` when the slope is at least one.
    pub im_formula_defect: f64,
    pub slope_at_least_one: bool,
    /// Largest `|η'(τ_i) - η'(τ_j)|` over the grid.
    pub tau_flatness: f64,
    /// Largest `|det A'(τ)| - |A - C - iB|` relative to the radius.
    pub det_circle_defect: f64,
    /// Largest `|u² + v² + vu' - uv'|` over the squared coefficient scale.
    pub uv_identity_defect: f64,
    /// Largest `|det(A') I' + Θ| / |Θ|`.
    pub theta_product_defect: f64,
    /// Largest gap between the determinant and linear-system routes.
    pub route_defect: f64,
    pub variant_relations: VariantRelations,
    pub tangent_identity: TangentDefects,
    /// `τ` samples where a complex solve failed.
    pub skipped_taus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceOptions {
    pub tau_grid: usize,
    pub random_taus: usize,
    pub seed: u64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        Self {
            tau_grid: 16,
            random_taus: 8,
            seed: 0x5eed,
        }
    }
}

pub fn equivalence_check(table: &ElementTable) -> Result<EquivalenceReport> {
    equivalence_check_with(table, &EquivalenceOptions::default())
}

pub fn equivalence_check_with(table: &ElementTable, options: &EquivalenceOptions) -> Result<EquivalenceReport> {
    let ct = ConditionedTable::new(table);
    let coeffs = algebra::extract_conditioned(&ct)?;
    equivalence_from_parts(&ct, &coeffs, options)
}

pub(crate) fn equivalence_from_parts(
    ct: &ConditionedTable,
    coeffs: &DetCoefficients,
    options: &EquivalenceOptions,
) -> Result<EquivalenceReport> {
    let analysis = kohn_real::optimize_tau(coeffs);
    if analysis.degenerate != Degeneracy::None {
        return Err(KohnError::Degenerate(format!(
            "{} degenerate at k = {}: no optimized tau",
            analysis.degenerate.label(),
            coeffs.k
        )));
    }
    let opt = analysis.optimum.expect("optimum exists when not degenerate");
    let k_tilde = coeffs.k_tilde;

    let grid: Vec<f64> = (0..options.tau_grid)
        .map(|i| PI * i as f64 / options.tau_grid as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let random: Vec<f64> = (0..options.random_taus)
        .map(|_| rng.random_range(0.0..PI))
        .collect();

    let mut skipped = Vec::new();
    let mut reference: Option<Complex64> = None;
    let mut tau_flatness: f64 = 0.0;
    let mut route_defect: f64 = 0.0;
    let mut det_circle_defect: f64 = 0.0;
    let mut uv_identity_defect: f64 = 0.0;
    let mut theta_product_defect: f64 = 0.0;
    let mut relations = VariantRelations {
        s_relation_defect: 0.0,
        t_relation_defect: 0.0,
        t_conjugate_relation_defect: 0.0,
        t_imag_defect: 0.0,
        transform_route_defect: 0.0,
    };
    let radius = Complex64::new(coeffs.cal_bt, -coeffs.cal_b).norm();
    let scale2 = coeffs.scale() * coeffs.scale();

    for &tau in grid.iter().chain(&random) {
        let k_sol = match solve_complex_conditioned(ct, tau, Variant::K) {
            Ok(s) => s,
            Err(_) => {
                skipped.push(tau);
                continue;
            }
        };
        let eta = k_sol.eta_v;
        match reference {
            None => reference = Some(eta),
            Some(r) => tau_flatness = tau_flatness.max(phase_gap(eta, r)),
        }
        det_circle_defect = det_circle_defect.max((k_sol.det_a_c.norm() - radius).abs() / radius);
        det_circle_defect = det_circle_defect.max((k_sol.det_a_c - det_a_prime(coeffs, tau)).norm() / radius);
        uv_identity_defect = uv_identity_defect.max(uv_identity(coeffs, tau).norm() / scale2);
        if coeffs.theta != 0.0 {
            theta_product_defect = theta_product_defect
                .max((k_sol.det_a_c * k_sol.i_value + coeffs.theta).norm() / coeffs.theta.abs());
        }
        if let Ok(det_route) = eta_complex_via_determinants(coeffs, tau) {
            route_defect = route_defect.max(phase_gap(det_route, eta));
        }

        let t_sol = solve_complex_conditioned(ct, tau, Variant::T);
        let s_sol = solve_complex_conditioned(ct, tau, Variant::S);
        if let (Ok(t_sol), Ok(s_sol)) = (t_sol, s_sol) {
            let (t_tr, s_tr) = transform_from_k(&k_sol, k_tilde);
            let a_prime = k_sol.a_v;
            let rel = |x: Complex64, y: Complex64| (x - y).norm() / y.norm().max(1.0);
            relations.s_relation_defect = relations
                .s_relation_defect
                .max(rel(s_sol.a_v, ONE + 2.0 * I * t_sol.a_v));
            relations.t_relation_defect = relations
                .t_relation_defect
                .max(rel(t_sol.a_v, I * a_prime.conj()));
            relations.t_conjugate_relation_defect = relations
                .t_conjugate_relation_defect
                .max(rel(t_sol.a_v, -I * a_prime.conj()));
            relations.t_imag_defect = relations.t_imag_defect.max((t_sol.eta_v.im + eta.im).abs());
            relations.transform_route_defect = relations
                .transform_route_defect
                .max(rel(t_sol.a_v, t_tr.a_v))
                .max(rel(s_sol.a_v, s_tr.a_v))
                .max(phase_gap(t_sol.eta_v, t_tr.eta_v))
                .max(phase_gap(s_sol.eta_v, s_tr.eta_v));
        } else {
            skipped.push(tau);
        }
    }

    let eta_c = reference.ok_or_else(|| KohnError::Extraction("every complex solve failed".into()))?;

    let mut ac_defect: f64 = 0.0;
    let mut ac_negative = true;
    for &tau in &random {
        let b = -(coeffs.f(tau).powi(2) + coeffs.g(tau).powi(2));
        let want = Complex64::new(coeffs.xy_form(tau), coeffs.gamma * coeffs.gamma) / b;
        for (eta_i, tau_i) in [(opt.eta0, opt.tau0), (opt.eta1, opt.tau1)] {
            let got = (eta_i - eta_c - tau_i + tau).tan();
            ac_defect = ac_defect.max((got - want).norm() / want.norm());
            ac_negative &= got.im < 0.0;
        }
    }

    let slope0 = opt.slope_at_tau0;
    let slope_at_least_one = slope0 >= 1.0;
    let im_formula_defect = if slope_at_least_one {
        (eta_c.im.tanh() - slope0).abs()
    } else {
        (eta_c.im - slope0.atanh()).abs()
    };

    Ok(EquivalenceReport {
        k: coeffs.k,
        eta0: opt.eta0,
        eta_c,
        slope_at_tau0: slope0,
        re_match_defect: wrap_phase(eta_c.re - opt.eta0).abs(),
        im_formula_defect,
        slope_at_least_one,
        tau_flatness,
        det_circle_defect,
        uv_identity_defect,
        theta_product_defect,
        route_defect,
        variant_relations: relations,
        tangent_identity: TangentDefects {
            relative_defect: ac_defect,
            imaginary_negative: ac_negative,
        },
        skipped_taus: skipped,
    })
}

/// Distance between two complex phases with real parts compared modulo π.
pub fn phase_gap(a: Complex64, b: Complex64) -> f64 {
    wrap_phase(a.re - b.re).abs().hypot(a.im - b.im)
}
