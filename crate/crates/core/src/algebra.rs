//! `tau` rotation of element tables, the Kohn linear system and the
//! `tau`-independent determinant coefficients that describe it.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::ElementTable;
use crate::{KohnError, Result};

/// Condition number above which a Kohn matrix counts as numerically singular.
pub const CONDITION_LIMIT: f64 = 1e15;
/// Relative size of `2Ã + B` below which the closed-form Γ is not trusted.
pub const NEAR_KS_FACTOR: f64 = 1e-8;

/// Integrals among the rotated free functions
/// `S̄ = cos τ S + sin τ C`, `C̄ = -sin τ S + cos τ C` and the `chi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotatedTable {
    pub tau: f64,
    pub k_tilde: f64,
    pub ss: f64,
    pub sc: f64,
    pub cs: f64,
    pub cc: f64,
    pub s_chi: Vec<f64>,
    pub c_chi: Vec<f64>,
    pub chi_chi: Vec<Vec<f64>>,
}

impl RotatedTable {
    pub fn m(&self) -> usize {
        self.s_chi.len()
    }
}

/// Rotate by `tau ∈ [0, π)`.
pub fn rotate(table: &ElementTable, tau: f64) -> Result<RotatedTable> {
    if !(0.0..PI).contains(&tau) {
        return Err(KohnError::Domain(format!("tau must lie in [0, pi), got {tau}")));
    }
    Ok(rotate_any(table, tau))
}

/// Rotation without the domain check; the formulas hold for every real `tau`.
pub(crate) fn rotate_any(table: &ElementTable, tau: f64) -> RotatedTable {
    if tau == 0.0 {
        return RotatedTable {
            tau,
            k_tilde: table.k_tilde,
            ss: table.ss,
            sc: table.sc,
            cs: table.cs,
            cc: table.cc,
            s_chi: table.s_chi.clone(),
            c_chi: table.c_chi.clone(),
            chi_chi: table.chi_chi.clone(),
        };
    }
    let (s, c) = tau.sin_cos();
    let (ss, sc, cs, cc) = (table.ss, table.sc, table.cs, table.cc);
    RotatedTable {
        tau,
        k_tilde: table.k_tilde,
        ss: c * c * ss + c * s * (sc + cs) + s * s * cc,
        sc: -c * s * ss + c * c * sc - s * s * cs + s * c * cc,
        cs: -s * c * ss - s * s * sc + c * c * cs + c * s * cc,
        cc: s * s * ss - s * c * (sc + cs) + c * c * cc,
        s_chi: table
            .s_chi
            .iter()
            .zip(&table.c_chi)
            .map(|(a, b)| c * a + s * b)
            .collect(),
        c_chi: table
            .s_chi
            .iter()
            .zip(&table.c_chi)
            .map(|(a, b)| -s * a + c * b)
            .collect(),
        chi_chi: table.chi_chi.clone(),
    }
}

/// The Kohn equations `A x = -b` for `x = (a_t, p_1, ..., p_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KohnSystem {
    pub tau: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl KohnSystem {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `A` with its first column replaced by `-b`.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let mut at = self.a.clone();
        at.set_column(0, &(-&self.b));
        at
    }

    pub fn det_a(&self) -> f64 {
        linalg::det(&self.a)
    }

    pub fn det_a_tilde(&self) -> f64 {
        linalg::det(&self.a_tilde())
    }
}

pub fn build_kohn_system(rt: &RotatedTable) -> KohnSystem {
    let n = rt.m() + 1;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    a[(0, 0)] = rt.cc;
    b[0] = rt.cs;
    for j in 0..rt.m() {
        a[(0, j + 1)] = rt.c_chi[j];
        a[(j + 1, 0)] = rt.c_chi[j];
        b[j + 1] = rt.s_chi[j];
        for i in 0..rt.m() {
            a[(i + 1, j + 1)] = rt.chi_chi[i][j];
        }
    }
    KohnSystem { tau: rt.tau, a, b }
}

pub(crate) fn system_at(table: &ElementTable, tau: f64) -> KohnSystem {
    build_kohn_system(&rotate_any(table, tau))
}

/// An element table re-expressed in the eigenbasis of the closed block
/// `<chi_i, chi_j>`, with each eigenfunction scaled so the closed block becomes
/// `diag(±1)`.
///
/// The change of closed basis leaves the trial space, `a_t`, `I` and every
/// phase shift untouched and multiplies every `(M+1)`-order determinant by the
/// same positive constant. Working here keeps the Kohn matrices well
/// conditioned even when the raw Slater functions are nearly dependent;
/// `det_scale` restores the determinants of the source basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedTable {
    pub table: ElementTable,
    /// `det(A)` in the source basis divided by `det(A)` in this one.
    pub det_scale: f64,
    /// Row `f` holds the source coefficients of scaled eigenfunction `f`.
    pub transform: DMatrix<f64>,
}

impl ConditionedTable {
    pub fn new(table: &ElementTable) -> Self {
        let m = table.m();
        if m == 0 {
            return Self {
                table: table.clone(),
                det_scale: 1.0,
                transform: DMatrix::zeros(0, 0),
            };
        }
        let closed = DMatrix::from_fn(m, m, |i, j| table.chi_chi[i][j]);
        let eig = closed.symmetric_eigen();
        let peak = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut transform = DMatrix::zeros(m, m);
        let mut diag = vec![0.0; m];
        let mut det_scale = 1.0;
        for f in 0..m {
            let lambda = eig.eigenvalues[f];
            let weight = lambda.abs().max(1e-14 * peak);
            let d = weight.sqrt().recip();
            for i in 0..m {
                transform[(f, i)] = d * eig.eigenvectors[(i, f)];
            }
            diag[f] = lambda / weight;
            det_scale *= weight;
        }
        let map = |v: &[f64]| -> Vec<f64> {
            (0..m)
                .map(|f| (0..m).map(|i| transform[(f, i)] * v[i]).sum())
                .collect()
        };
        let mut chi_chi = vec![vec![0.0; m]; m];
        for f in 0..m {
            chi_chi[f][f] = diag[f];
        }
        let conditioned = ElementTable {
            s_chi: map(&table.s_chi),
            c_chi: map(&table.c_chi),
            chi_chi,
            ..table.clone()
        };
        Self {
            table: conditioned,
            det_scale,
            transform,
        }
    }

    pub fn system_at(&self, tau: f64) -> KohnSystem {
        system_at(&self.table, tau)
    }

    /// `det(A; tau)` in the source basis.
    pub fn det_a_at(&self, tau: f64) -> f64 {
        self.det_scale * self.system_at(tau).det_a()
    }

    /// `det(Ã; tau)` in the source basis.
    pub fn det_a_tilde_at(&self, tau: f64) -> f64 {
        self.det_scale * self.system_at(tau).det_a_tilde()
    }

    /// Closed-function coefficients in the source basis.
    pub fn source_coefficients(&self, p: &[f64]) -> Vec<f64> {
        let m = p.len();
        (0..m)
            .map(|i| (0..m).map(|f| self.transform[(f, i)] * p[f]).sum())
            .collect()
    }
}

/// `det(A; tau)` for the source table, evaluated through the conditioned basis.
pub fn det_a_at(table: &ElementTable, tau: f64) -> f64 {
    ConditionedTable::new(table).det_a_at(tau)
}

/// `det(Ã; tau)` for the source table, evaluated through the conditioned basis.
pub fn det_a_tilde_at(table: &ElementTable, tau: f64) -> f64 {
    ConditionedTable::new(table).det_a_tilde_at(tau)
}

/// The `tau`-independent scalars that determine the phase shift at one `k`.
///
/// `g(τ) = det A = A sin²τ + B sinτ cosτ + C cos²τ` and
/// `f(τ) = det Ã - Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetCoefficients {
    pub k: f64,
    pub k_tilde: f64,
    #[serde(rename = "calA")]
    pub cal_a: f64,
    #[serde(rename = "calB")]
    pub cal_b: f64,
    #[serde(rename = "calC")]
    pub cal_c: f64,
    #[serde(rename = "calAt")]
    pub cal_at: f64,
    /// `A - C`.
    #[serde(rename = "calBt")]
    pub cal_bt: f64,
    /// `Ã + B`.
    #[serde(rename = "calCt")]
    pub cal_ct: f64,
    /// `det(A) I[Ψ]`, evaluated at `theta_tau`.
    pub theta: f64,
    pub theta_tau: f64,
    /// `Θ / k̃`.
    pub gamma: f64,
    /// Γ from the four determinants alone; `None` near a zero of `2Ã + B`.
    pub gamma_det: Option<f64>,
    #[serde(rename = "calD")]
    pub cal_d: f64,
    #[serde(rename = "calX")]
    pub cal_x: f64,
    #[serde(rename = "calY")]
    pub cal_y: f64,
    /// `|2Ã + B|` fell below the guard and Γ came from Θ alone.
    pub near_ks: bool,
}

impl DetCoefficients {
    /// `|A| + |B| + |C| + |Ã|`.
    pub fn scale(&self) -> f64 {
        self.cal_a.abs() + self.cal_b.abs() + self.cal_c.abs() + self.cal_at.abs()
    }

    pub fn g(&self, tau: f64) -> f64 {
        let (s, c) = tau.sin_cos();
        self.cal_a * s * s + self.cal_b * s * c + self.cal_c * c * c
    }

    pub fn det_tilde(&self, tau: f64) -> f64 {
        let (s, c) = tau.sin_cos();
        self.cal_at * s * s + self.cal_bt * s * c + self.cal_ct * c * c
    }

    pub fn f(&self, tau: f64) -> f64 {
        self.det_tilde(tau) - self.gamma
    }

    pub fn f_prime(&self, tau: f64) -> f64 {
        let (s2, c2) = (2.0 * tau).sin_cos();
        self.cal_bt * c2 - self.cal_b * s2
    }

    pub fn g_prime(&self, tau: f64) -> f64 {
        let (s2, c2) = (2.0 * tau).sin_cos();
        self.cal_bt * s2 + self.cal_b * c2
    }

    /// `(Ã - Γ)(Ã - Γ + B) + A C`, which equals Γ².
    pub fn cal_g(&self) -> f64 {
        let d = self.cal_at - self.gamma;
        d * (d + self.cal_b) + self.cal_a * self.cal_c
    }

    /// `(Ã + B) Ã + A C - (2Ã + B) Γ`, which vanishes.
    pub fn h_residual(&self) -> f64 {
        (self.cal_at + self.cal_b) * self.cal_at + self.cal_a * self.cal_c
            - (2.0 * self.cal_at + self.cal_b) * self.gamma
    }

    /// `X sin 2τ + Y cos 2τ`, equal to `f f' + g g'`.
    pub fn xy_form(&self, tau: f64) -> f64 {
        let (s2, c2) = (2.0 * tau).sin_cos();
        self.cal_x * s2 + self.cal_y * c2
    }

    pub fn near_ks_threshold(&self) -> f64 {
        NEAR_KS_FACTOR * self.scale()
    }
}

/// Θ = det(A) I at one `tau`, by solving the Kohn equations.
pub fn theta_at(table: &ElementTable, tau: f64) -> Result<f64> {
    theta_at_conditioned(&ConditionedTable::new(table), tau)
}

pub(crate) fn theta_at_conditioned(ct: &ConditionedTable, tau: f64) -> Result<f64> {
    let sol = crate::kohn_real::solve_conditioned(ct, tau)?;
    Ok(sol.det_a * sol.i_value)
}

/// Extract the determinant coefficients from `det A` and `det Ã` at
/// `tau = 0, π/4, π/2`, and Θ from one solve at the `tau` where `|det A|` is
/// largest.
pub fn extract_det_coefficients(table: &ElementTable) -> Result<DetCoefficients> {
    extract_conditioned(&ConditionedTable::new(table))
}

pub(crate) fn extract_conditioned(ct: &ConditionedTable) -> Result<DetCoefficients> {
    let table = &ct.table;
    let cal_c = ct.det_a_at(0.0);
    let cal_a = ct.det_a_at(FRAC_PI_2);
    let cal_b = 2.0 * ct.det_a_at(FRAC_PI_4) - cal_a - cal_c;
    let cal_at = ct.det_a_tilde_at(FRAC_PI_2);
    let cal_bt = cal_a - cal_c;
    let cal_ct = cal_at + cal_b;

    // Θ is tau-independent; evaluate it where |det A| is largest.
    let theta_tau = best_conditioned_tau(cal_a, cal_b, cal_c);
    let theta = theta_at_conditioned(ct, theta_tau).map_err(|e| {
        KohnError::Extraction(format!(
            "no usable tau at k = {} (A = {cal_a:e}, B = {cal_b:e}, C = {cal_c:e}): {e}",
            table.k
        ))
    })?;
    let k_tilde = table.k_tilde;
    let gamma = theta / k_tilde;

    let scale = cal_a.abs() + cal_b.abs() + cal_c.abs() + cal_at.abs();
    let denom = 2.0 * cal_at + cal_b;
    let near_ks = denom.abs() < NEAR_KS_FACTOR * scale;
    let gamma_det = (!near_ks).then(|| ((cal_at + cal_b) * cal_at + cal_a * cal_c) / denom);
    let cal_d = if near_ks {
        cal_at - gamma
    } else {
        (cal_at * cal_at - cal_a * cal_c) / denom
    };
    let cal_x = 0.5 * (cal_a * cal_a - cal_b * cal_b - cal_c * cal_c) + cal_b * (gamma - cal_at);
    let cal_y = (gamma - cal_at) * (cal_c - cal_a) + cal_a * cal_b;

    Ok(DetCoefficients {
        k: table.k,
        k_tilde,
        cal_a,
        cal_b,
        cal_c,
        cal_at,
        cal_bt,
        cal_ct,
        theta,
        theta_tau,
        gamma,
        gamma_det,
        cal_d,
        cal_x,
        cal_y,
        near_ks,
    })
}

/// The stationary point of `g(τ)` with the larger `|g|`, in `[0, π)`.
pub(crate) fn best_conditioned_tau(cal_a: f64, cal_b: f64, cal_c: f64) -> f64 {
    let (t1, t2) = stationary_pair(cal_a, cal_b, cal_c);
    let g = |t: f64| {
        let (s, c) = f64::sin_cos(t);
        cal_a * s * s + cal_b * s * c + cal_c * c * c
    };
    if g(t1).abs() >= g(t2).abs() {
        t1
    } else {
        t2
    }
}

/// The two roots of `(A - C) sin 2τ + B cos 2τ = 0` in `[0, π)`, smaller first.
pub(crate) fn stationary_pair(cal_a: f64, cal_b: f64, cal_c: f64) -> (f64, f64) {
    let t = crate::wrap_tau(0.5 * f64::atan2(-cal_b, cal_a - cal_c));
    let u = crate::wrap_tau(t + FRAC_PI_2);
    if t <= u {
        (t, u)
    } else {
        (u, t)
    }
}

/// Θ sampled at several `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    /// `(tau, Θ)` for every nonsingular sample.
    pub samples: Vec<(f64, f64)>,
    /// Samples at which `A` was singular and Θ could not be formed.
    pub skipped: Vec<f64>,
    /// `max Θ - min Θ` over the usable samples.
    pub spread: f64,
    /// `spread / max |Θ|`; zero when every sample is zero.
    pub relative_spread: f64,
}

pub fn theta_invariance_check(table: &ElementTable, taus: &[f64]) -> ThetaReport {
    let ct = ConditionedTable::new(table);
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for &tau in taus {
        match theta_at_conditioned(&ct, tau) {
            Ok(theta) => samples.push((tau, theta)),
            Err(_) => skipped.push(tau),
        }
    }
    let (lo, hi, big) = samples.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0f64),
        |(lo, hi, big), &(_, t)| (lo.min(t), hi.max(t), big.max(t.abs())),
    );
    let spread = if samples.is_empty() { 0.0 } else { hi - lo };
    let relative_spread = if big > 0.0 { spread / big } else { 0.0 };
    ThetaReport {
        samples,
        skipped,
        spread,
        relative_spread,
    }
}

/// Residual of the Desnanot–Jacobi identity
/// `det X · det X^{(i,p)}_{(j,q)} = ± [det Xⁱⱼ det Xᵖ_q − det Xᵖⱼ det Xⁱ_q]`
/// where superscripts are deleted rows and subscripts deleted columns, and
/// the sign is `(-1)^(σ(i,p) + σ(j,q))` with `σ(a,b) = 1` when `a < b`.
/// Both sides are zero when `i = p` or `j = q`.
pub fn desnanot_jacobi_check(x: &DMatrix<f64>, i: usize, j: usize, p: usize, q: usize) -> Result<f64> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(KohnError::Domain("matrix must be square".into()));
    }
    if n < 3 {
        return Err(KohnError::Domain(format!("matrix dimension must be at least 3, got {n}")));
    }
    if i >= n || j >= n || p >= n || q >= n {
        return Err(KohnError::Domain(format!(
            "indices ({i}, {j}, {p}, {q}) out of range for dimension {n}"
        )));
    }
    if i == p || j == q {
        return Ok(0.0);
    }
    let minor = |rows: &[usize], cols: &[usize]| linalg::det(&linalg::without(x, rows, cols));
    let sigma = |a: usize, b: usize| usize::from(a < b);
    let sign = if (sigma(i, p) + sigma(j, q)) % 2 == 0 { 1.0 } else { -1.0 };
    let lhs = linalg::det(x) * minor(&[i, p], &[j, q]);
    let rhs = sign * (minor(&[i], &[j]) * minor(&[p], &[q]) - minor(&[p], &[j]) * minor(&[i], &[q]));
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_elements, BasisSet, Potential, RadialProblem};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(k: f64, m: usize) -> ElementTable {
        assemble_elements(
            &RadialProblem::square_well_default(k),
            &BasisSet::default_family(m).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rotation_by_zero_is_identity() {
        let t = table(0.5, 4);
        let r = rotate(&t, 0.0).unwrap();
        assert_eq!((r.ss, r.sc, r.cs, r.cc), (t.ss, t.sc, t.cs, t.cc));
        assert_eq!(r.s_chi, t.s_chi);
        assert_eq!(r.c_chi, t.c_chi);
    }

    #[test]
    fn rotation_by_right_angle_swaps_roles() {
        let t = table(0.5, 4);
        let r = rotate_any(&t, FRAC_PI_2);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-14 * t.scale();
        assert!(close(r.ss, t.cc));
        assert!(close(r.cc, t.ss));
        assert!(close(r.sc, -t.cs));
        assert!(close(r.cs, -t.sc));
    }

    #[test]
    fn rotate_rejects_out_of_range() {
        let t = table(0.5, 1);
        assert!(rotate(&t, PI).is_err());
        assert!(rotate(&t, -0.1).is_err());
    }

    #[test]
    fn rotated_antisymmetry_is_preserved() {
        let t = table(0.5, 8);
        let r = rotate(&t, 0.3).unwrap();
        assert!(((r.sc - r.cs) - (t.sc - t.cs)).abs() < 1e-12);
    }

    #[test]
    fn kohn_system_layout() {
        let t = table(0.5, 8);
        let r = rotate(&t, 0.3).unwrap();
        let sys = build_kohn_system(&r);
        assert_eq!(sys.a[(0, 0)], r.cc);
        assert_eq!(sys.b[0], r.cs);
        for j in 1..sys.dim() {
            assert_eq!(sys.a[(0, j)], sys.a[(j, 0)]);
            assert_eq!(sys.b[j], r.s_chi[j - 1]);
        }
        let m0 = build_kohn_system(&rotate(&table(0.5, 0), 0.0).unwrap());
        assert_eq!(m0.a.shape(), (1, 1));
    }

    #[test]
    fn zero_potential_right_hand_side_vanishes() {
        let t = assemble_elements(
            &RadialProblem::new(Potential::Zero, 0.5),
            &BasisSet::default_family(8).unwrap(),
        )
        .unwrap();
        let sys = build_kohn_system(&rotate(&t, 0.0).unwrap());
        assert!(sys.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coefficients_without_correlation_functions() {
        let t = table(0.5, 0);
        let d = extract_det_coefficients(&t).unwrap();
        let tol = 1e-13 * t.scale();
        assert!((d.cal_a - t.ss).abs() < tol);
        assert!((d.cal_c - t.cc).abs() < tol);
        assert!((d.cal_b + (t.sc + t.cs)).abs() < tol);
        assert!((d.cal_at - t.sc).abs() < tol);
    }

    #[test]
    fn quadratic_forms_reproduce_direct_determinants() {
        let t = table(0.5, 8);
        let d = extract_det_coefficients(&t).unwrap();
        let ct = ConditionedTable::new(&t);
        for i in 0..32 {
            let tau = PI * i as f64 / 32.0;
            let scale = d.scale();
            assert!((ct.det_a_at(tau) - d.g(tau)).abs() < 1e-10 * scale);
            assert!((ct.det_a_tilde_at(tau) - d.det_tilde(tau)).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn conditioned_determinants_track_raw_factorization() {
        // the raw Slater block is badly conditioned, so only loose agreement
        let t = table(0.5, 8);
        let ct = ConditionedTable::new(&t);
        for tau in [0.3, 1.7] {
            let raw = system_at(&t, tau).det_a();
            let cond = ct.det_a_at(tau);
            assert!(((raw - cond) / cond).abs() < 1e-3, "{raw} vs {cond}");
        }
        let t4 = table(0.5, 4);
        let ct4 = ConditionedTable::new(&t4);
        let raw = system_at(&t4, 0.3).det_a();
        assert!(((raw - ct4.det_a_at(0.3)) / raw).abs() < 1e-10);
    }

    #[test]
    fn conditioned_closed_block_is_signature_matrix() {
        let t = table(0.5, 8);
        let ct = ConditionedTable::new(&t);
        let x = DMatrix::from_fn(8, 8, |i, j| t.chi_chi[i][j]);
        let back = &ct.transform * x * ct.transform.transpose();
        for i in 0..8 {
            for j in 0..8 {
                let want = ct.table.chi_chi[i][j];
                assert!((back[(i, j)] - want).abs() < 1e-4, "({i},{j}) {} vs {want}", back[(i, j)]);
            }
            assert_eq!(ct.table.chi_chi[i][i].abs(), 1.0);
        }
    }

    #[test]
    fn gamma_routes_agree_and_g_equals_gamma_squared() {
        for k in [0.1, 0.3, 0.5, 0.8, 1.0] {
            let d = extract_det_coefficients(&table(k, 8)).unwrap();
            let gd = d.gamma_det.unwrap();
            assert!((gd - d.gamma).abs() < 1e-8 * d.scale(), "k={k}: {gd} vs {}", d.gamma);
            assert!((d.cal_g() - d.gamma * d.gamma).abs() < 1e-8 * d.scale().powi(2));
        }
    }

    #[test]
    fn zero_potential_has_vanishing_gamma() {
        let t = assemble_elements(
            &RadialProblem::new(Potential::Zero, 0.4),
            &BasisSet::default_family(8).unwrap(),
        )
        .unwrap();
        let d = extract_det_coefficients(&t).unwrap();
        assert!(d.gamma.abs() < 1e-12 * d.scale(), "{}", d.gamma);
        assert!(d.gamma_det.unwrap().abs() < 1e-12 * d.scale());
    }

    #[test]
    fn open_sum_equals_closed_determinant_times_k_tilde() {
        let t = table(0.6, 8);
        let d = extract_det_coefficients(&t).unwrap();
        let ct = ConditionedTable::new(&t);
        let p = ct.det_scale * (0..t.m()).map(|f| ct.table.chi_chi[f][f]).product::<f64>();
        let lhs = 2.0 * d.cal_at + d.cal_b;
        assert!((lhs - p * t.k_tilde).abs() < 1e-8 * lhs.abs());
    }

    #[test]
    fn theta_is_tau_invariant() {
        let t = table(0.5, 8);
        let rep = theta_invariance_check(&t, &[0.1, 0.7, 1.3, 2.9]);
        assert!(rep.skipped.is_empty());
        assert!(rep.relative_spread < 1e-9, "{}", rep.relative_spread);
    }

    #[test]
    fn theta_single_chi_matches_explicit_expansion() {
        let t = table(0.7, 1);
        let tau = 0.4;
        let r = rotate(&t, tau).unwrap();
        // 2x2 Kohn system solved by hand
        let (a00, a01, a11) = (r.cc, r.c_chi[0], r.chi_chi[0][0]);
        let (b0, b1) = (r.cs, r.s_chi[0]);
        let det = a00 * a11 - a01 * a01;
        let at = (-b0 * a11 + a01 * b1) / det;
        let p = (-a00 * b1 + a01 * b0) / det;
        let i_value = r.ss + at * r.sc + p * r.s_chi[0];
        let theta = theta_at(&t, tau).unwrap();
        assert!((theta - det * i_value).abs() < 1e-12 * theta.abs());
    }

    #[test]
    fn desnanot_jacobi_identity_small_cases() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(desnanot_jacobi_check(&id, 1, 1, 2, 2).unwrap(), 0.0);
        assert_eq!(desnanot_jacobi_check(&id, 1, 0, 1, 2).unwrap(), 0.0);
        assert!(desnanot_jacobi_check(&id, 0, 0, 3, 1).is_err());
        assert!(desnanot_jacobi_check(&DMatrix::<f64>::identity(2, 2), 0, 0, 1, 1).is_err());
    }

    #[test]
    fn desnanot_jacobi_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut x = DMatrix::zeros(5, 5);
            for i in 0..5 {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    x[(i, j)] = v;
                    x[(j, i)] = v;
                }
            }
            for (i, j, p, q) in [(0, 0, 1, 1), (3, 1, 0, 4), (2, 4, 4, 0), (1, 2, 3, 3)] {
                assert!(desnanot_jacobi_check(&x, i, j, p, q).unwrap() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn desnanot_jacobi_holds_for_any_index_choice(
            entries in proptest::collection::vec(-1.0f64..1.0, 16),
            i in 0usize..4, j in 0usize..4, p in 0usize..4, q in 0usize..4,
        ) {
            let x = DMatrix::from_row_slice(4, 4, &entries);
            prop_assert!(desnanot_jacobi_check(&x, i, j, p, q).unwrap() < 1e-12);
        }

        #[test]
        fn rotation_composes(t1 in 0.0f64..1.5, t2 in 0.0f64..1.5) {
            let t = table(0.5, 2);
            let once = rotate_any(&t, t1 + t2);
            let r1 = rotate_any(&t, t1);
            let as_table = ElementTable::from_integrals(
                t.k, t.k_tilde, r1.ss, r1.sc, r1.cs, r1.cc,
                r1.s_chi.clone(), r1.c_chi.clone(), r1.chi_chi.clone(),
            ).unwrap();
            let twice = rotate_any(&as_table, t2);
            let tol = 1e-13 * t.scale();
            prop_assert!((once.ss - twice.ss).abs() < tol);
            prop_assert!((once.sc - twice.sc).abs() < tol);
            prop_assert!((once.cs - twice.cs).abs() < tol);
            prop_assert!((once.cc - twice.cc).abs() < tol);
        }
    }
}
