//! Named verification suites, each a set of residual checks run over a k grid.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, ConditionedTable, DetCoefficients};
use crate::kohn_complex::{self, EquivalenceOptions, EquivalenceReport};
use crate::kohn_real::{self, Degeneracy, TauAnalysis};
use crate::lmatrix::{self, LDecomposition};
use crate::model::{assemble_elements, BasisSet, ElementTable, RadialProblem};
use crate::{linalg, wrap_phase, wrap_tau, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Theta,
    GammaSq,
    Desnanot,
    TangentIdentity,
    Flatness,
    Equivalence,
    ImFormula,
    Lmatrix,
    TsRelations,
    SlopeFd,
    Routes,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Theta,
        Suite::GammaSq,
        Suite::Desnanot,
        Suite::TangentIdentity,
        Suite::Flatness,
        Suite::Equivalence,
        Suite::ImFormula,
        Suite::Lmatrix,
        Suite::TsRelations,
        Suite::SlopeFd,
        Suite::Routes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theta => "theta",
            Suite::GammaSq => "gamma_sq",
            Suite::Desnanot => "desnanot",
            Suite::TangentIdentity => "tangent_identity",
            Suite::Flatness => "flatness",
            Suite::Equivalence => "equivalence",
            Suite::ImFormula => "im_formula",
            Suite::Lmatrix => "lmatrix",
            Suite::TsRelations => "ts_relations",
            Suite::SlopeFd => "slope_fd",
            Suite::Routes => "routes",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                format!("unknown suite `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub antisymmetry: f64,
    pub theta: f64,
    pub gamma_sq: f64,
    pub desnanot: f64,
    pub tangent_identity: f64,
    pub flatness: f64,
    pub equivalence: f64,
    pub im_formula: f64,
    pub lmatrix: f64,
    pub lmatrix_invariance: f64,
    /// Correspondence tolerance when the check falls back to interpolation near a pole.
    pub lmatrix_near_pole: f64,
    pub ts_relations: f64,
    pub slope_fd: f64,
    pub routes: f64,
    pub optimizer_tau: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            antisymmetry: 1e-8,
            theta: 1e-9,
            gamma_sq: 1e-8,
            desnanot: 1e-12,
            tangent_identity: 1e-8,
            flatness: 1e-10,
            equivalence: 1e-10,
            im_formula: 1e-9,
            lmatrix: 1e-8,
            lmatrix_invariance: 1e-10,
            lmatrix_near_pole: 1e-6,
            ts_relations: 1e-9,
            slope_fd: 1e-6,
            routes: 1e-9,
            optimizer_tau: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let named = [
            ("antisymmetry", self.antisymmetry),
            ("theta", self.theta),
            ("gamma_sq", self.gamma_sq),
            ("desnanot", self.desnanot),
            ("tangent_identity", self.tangent_identity),
            ("flatness", self.flatness),
            ("equivalence", self.equivalence),
            ("im_formula", self.im_formula),
            ("lmatrix", self.lmatrix),
            ("lmatrix_invariance", self.lmatrix_invariance),
            ("lmatrix_near_pole", self.lmatrix_near_pole),
            ("ts_relations", self.ts_relations),
            ("slope_fd", self.slope_fd),
            ("routes", self.routes),
            ("optimizer_tau", self.optimizer_tau),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("tolerance `{name}` must be > 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub ks: Vec<f64>,
    /// Uniform `tau` samples for invariance and route checks.
    pub tau_samples: usize,
    /// `tau` points per k for the finite-difference slope check.
    pub slope_points: usize,
    /// Random symmetric matrices for the Desnanot–Jacobi check.
    pub random_matrices: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            ks: (1..=10).map(|i| 0.1 * i as f64).collect(),
            tau_samples: 16,
            slope_points: 64,
            random_matrices: 100,
            seed: 0x5eed,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Nothing could be checked, e.g. every k was degenerate.
    Skipped,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub worst: f64,
    pub tolerance: f64,
    pub worst_k: Option<f64>,
    pub samples: usize,
    pub skipped_ks: Vec<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub status: Status,
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
}

impl SuiteResult {
    /// The check with the largest residual-to-tolerance ratio.
    pub fn worst_check(&self) -> Option<&CheckResult> {
        self.checks.iter().max_by(|a, b| {
            let ra = a.worst / a.tolerance.max(f64::MIN_POSITIVE);
            let rb = b.worst / b.tolerance.max(f64::MIN_POSITIVE);
            ra.total_cmp(&rb)
        })
    }
}

struct Check {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    worst_k: Option<f64>,
    samples: usize,
    skipped_ks: Vec<f64>,
    errors: Vec<String>,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            worst_k: None,
            samples: 0,
            skipped_ks: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn record(&mut self, k: f64, value: f64) {
        self.samples += 1;
        // NaN counts as the worst possible residual
        if !(value <= self.worst) {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
            self.worst_k = Some(k);
        }
    }

    fn skip(&mut self, k: f64) {
        if !self.skipped_ks.contains(&k) {
            self.skipped_ks.push(k);
        }
    }

    fn error(&mut self, k: f64, e: impl fmt::Display) {
        self.errors.push(format!("k = {k}: {e}"));
    }

    fn finish(self) -> CheckResult {
        let status = if !self.errors.is_empty() {
            Status::Fail
        } else if self.samples == 0 {
            Status::Skipped
        } else if self.worst <= self.tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        CheckResult {
            name: self.name.to_string(),
            status,
            worst: self.worst,
            tolerance: self.tolerance,
            worst_k: self.worst_k,
            samples: self.samples,
            skipped_ks: self.skipped_ks,
            errors: self.errors,
        }
    }
}

/// Everything computed once per k and shared by the suites.
struct KContext {
    k: f64,
    problem: RadialProblem,
    table: ElementTable,
    ct: ConditionedTable,
    coeffs: Result<DetCoefficients>,
    analysis: Option<TauAnalysis>,
    equivalence: Option<Result<EquivalenceReport>>,
    decomposition: Option<Result<LDecomposition>>,
}

impl KContext {
    fn degenerate(&self) -> bool {
        self.analysis
            .as_ref()
            .is_some_and(|a| a.degenerate != Degeneracy::None)
    }
}

fn suite_needs(suites: &[Suite], wanted: &[Suite]) -> bool {
    suites.iter().any(|s| wanted.contains(s))
}

/// Run the requested suites over `options.ks`.
///
/// A k whose table cannot be assembled fails every requested suite; a k that
/// is degenerate (`Γ` at the floor) is skipped by the checks that need `Γ`.
pub fn run_suites(problem: &RadialProblem, basis: &BasisSet, suites: &[Suite], options: &VerifyOptions) -> Vec<SuiteResult> {
    let need_equivalence = suite_needs(
        suites,
        &[Suite::TangentIdentity, Suite::Flatness, Suite::Equivalence, Suite::ImFormula, Suite::TsRelations, Suite::Routes],
    );
    let need_l = suites.contains(&Suite::Lmatrix);
    let overlap = basis.overlap();
    let eq_options = EquivalenceOptions {
        tau_grid: options.tau_samples,
        random_taus: 8,
        seed: options.seed,
    };

    let mut contexts = Vec::new();
    let mut assembly_errors = Vec::new();
    for &k in &options.ks {
        let p = problem.with_k(k);
        match assemble_elements(&p, basis) {
            Ok(table) => {
                let ct = ConditionedTable::new(&table);
                let coeffs = algebra::extract_conditioned(&ct);
                let analysis = coeffs.as_ref().ok().map(kohn_real::optimize_tau);
                let equivalence = (need_equivalence && coeffs.is_ok()).then(|| {
                    kohn_complex::equivalence_from_parts(&ct, coeffs.as_ref().unwrap(), &eq_options)
                });
                let decomposition = need_l.then(|| lmatrix::decompose(&table, &overlap));
                contexts.push(KContext {
                    k,
                    problem: p,
                    table,
                    ct,
                    coeffs,
                    analysis,
                    equivalence,
                    decomposition,
                });
            }
            Err(e) => assembly_errors.push(format!("k = {k}: {e}")),
        }
    }

    suites
        .iter()
        .map(|&suite| {
            let (checks, mut notes) = match suite {
                Suite::Theta => theta_suite(&contexts, options),
                Suite::GammaSq => gamma_sq_suite(&contexts, options),
                Suite::Desnanot => desnanot_suite(&contexts, options),
                Suite::TangentIdentity => tangent_identity_suite(&contexts, options),
                Suite::Flatness => flatness_suite(&contexts, options),
                Suite::Equivalence => equivalence_suite(&contexts, options),
                Suite::ImFormula => im_formula_suite(&contexts, options),
                Suite::Lmatrix => lmatrix_suite(&contexts, basis, options),
                Suite::TsRelations => ts_suite(&contexts, options),
                Suite::SlopeFd => slope_suite(&contexts, options),
                Suite::Routes => routes_suite(&contexts, options),
            };
            let mut checks: Vec<CheckResult> = checks.into_iter().map(Check::finish).collect();
            if !assembly_errors.is_empty() {
                let mut c = Check::new("assembly", 0.0);
                c.errors = assembly_errors.clone();
                checks.insert(0, c.finish());
            }
            let status = if checks.iter().any(|c| c.status == Status::Fail) {
                Status::Fail
            } else if checks.iter().all(|c| c.status == Status::Skipped) {
                Status::Skipped
            } else {
                Status::Pass
            };
            if status == Status::Skipped {
                notes.push("every k was degenerate or unusable for this suite".into());
            }
            SuiteResult {
                suite,
                status,
                checks,
                notes,
            }
        })
        .collect()
}

type SuiteOutput = (Vec<Check>, Vec<String>);

fn uniform_taus(n: usize, offset: f64) -> Vec<f64> {
    (0..n).map(|i| PI * (i as f64 + offset) / n as f64).collect()
}

fn with_coeffs<'a>(cx: &'a KContext, checks: &mut [&mut Check]) -> Option<&'a DetCoefficients> {
    match &cx.coeffs {
        Ok(c) => Some(c),
        Err(e) => {
            for check in checks.iter_mut() {
                check.error(cx.k, e);
            }
            None
        }
    }
}

fn with_equivalence<'a>(cx: &'a KContext, checks: &mut [&mut Check]) -> Option<&'a EquivalenceReport> {
    if cx.degenerate() {
        for check in checks.iter_mut() {
            check.skip(cx.k);
        }
        return None;
    }
    match &cx.equivalence {
        Some(Ok(r)) => Some(r),
        Some(Err(e)) => {
            for check in checks.iter_mut() {
                check.error(cx.k, e);
            }
            None
        }
        None => {
            if let Err(e) = &cx.coeffs {
                for check in checks.iter_mut() {
                    check.error(cx.k, e);
                }
            }
            None
        }
    }
}

fn theta_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let tol = &options.tolerances;
    let mut antisym = Check::new("antisymmetry", tol.antisymmetry);
    let mut spread = Check::new("theta_spread", tol.theta);
    let mut routes = Check::new("theta_vs_determinants", tol.gamma_sq);
    let mut notes = Vec::new();
    let taus = uniform_taus(options.tau_samples, 0.0);
    for cx in contexts {
        antisym.record(cx.k, cx.table.relative_antisymmetry_defect());
        let Some(c) = with_coeffs(cx, &mut [&mut spread, &mut routes]) else { continue };
        if cx.degenerate() {
            spread.skip(cx.k);
            routes.skip(cx.k);
            continue;
        }
        let report = algebra::theta_invariance_check(&cx.table, &taus);
        if !report.skipped.is_empty() {
            notes.push(format!("k = {}: {} singular tau samples skipped", cx.k, report.skipped.len()));
        }
        spread.record(cx.k, report.relative_spread);
        match c.gamma_det {
            Some(gd) => routes.record(cx.k, (c.theta - c.k_tilde * gd).abs() / c.theta.abs()),
            None => routes.skip(cx.k),
        }
    }
    (vec![antisym, spread, routes], notes)
}

fn gamma_sq_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let tol = options.tolerances.gamma_sq;
    let mut g = Check::new("cal_g_minus_gamma_sq", tol);
    let mut h = Check::new("h_residual", tol);
    for cx in contexts {
        let Some(c) = with_coeffs(cx, &mut [&mut g, &mut h]) else { continue };
        if cx.degenerate() {
            g.skip(cx.k);
            h.skip(cx.k);
            continue;
        }
        let g2 = c.gamma * c.gamma;
        g.record(cx.k, (c.cal_g() - g2).abs() / g2);
        h.record(cx.k, c.h_residual().abs() / (c.scale() * c.scale()));
    }
    (vec![g, h], Vec::new())
}

/// Desnanot–Jacobi residual relative to the size of its terms.
fn desnanot_relative(x: &DMatrix<f64>, i: usize, j: usize, p: usize, q: usize) -> Result<f64> {
    let residual = algebra::desnanot_jacobi_check(x, i, j, p, q)?;
    let minor = |rows: &[usize], cols: &[usize]| linalg::det(&linalg::without(x, rows, cols));
    let size = (linalg::det(x) * minor(&[i, p], &[j, q])).abs()
        + (minor(&[i], &[j]) * minor(&[p], &[q])).abs()
        + (minor(&[p], &[j]) * minor(&[i], &[q])).abs();
    Ok(if size > 0.0 { residual / size } else { residual })
}

fn desnanot_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let tol = options.tolerances.desnanot;
    let mut random = Check::new("random_symmetric_5x5", tol);
    let mut kohn = Check::new("kohn_matrix", tol);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.random_matrices {
        let mut x = DMatrix::zeros(5, 5);
        for r in 0..5 {
            for c in r..5 {
                let v: f64 = rng.random_range(-1.0..1.0);
                x[(r, c)] = v;
                x[(c, r)] = v;
            }
        }
        let i = rng.random_range(0..5);
        let j = rng.random_range(0..5);
        let p = (i + rng.random_range(1..5)) % 5;
        let q = (j + rng.random_range(1..5)) % 5;
        match algebra::desnanot_jacobi_check(&x, i, j, p, q) {
            Ok(r) => random.record(0.0, r),
            Err(e) => random.error(0.0, e),
        }
    }
    random.worst_k = None;
    for cx in contexts {
        let a = cx.ct.system_at(0.5).a;
        if a.nrows() < 3 {
            kohn.skip(cx.k);
            continue;
        }
        let n = a.nrows();
        for (i, j, p, q) in [(0, 0, 1, 1), (0, 0, n - 1, n - 1), (0, 1, 1, 0), (1, 2, n - 1, 0)] {
            match desnanot_relative(&a, i, j, p, q) {
                Ok(r) => kohn.record(cx.k, r),
                Err(e) => kohn.error(cx.k, e),
            }
        }
    }
    (vec![random, kohn], Vec::new())
}

fn tangent_identity_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let mut rel = Check::new("tan_relative", options.tolerances.tangent_identity);
    let mut neg = Check::new("imaginary_negative_violations", 0.0);
    for cx in contexts {
        let Some(r) = with_equivalence(cx, &mut [&mut rel, &mut neg]) else { continue };
        rel.record(cx.k, r.tangent_identity.relative_defect);
        neg.record(cx.k, if r.tangent_identity.imaginary_negative { 0.0 } else { 1.0 });
    }
    (vec![rel, neg], Vec::new())
}

fn flatness_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let tol = options.tolerances.flatness;
    let mut flat = Check::new("tau_flatness", tol);
    let mut circle = Check::new("det_circle", tol);
    let mut uv = Check::new("uv_identity", tol);
    let mut notes = Vec::new();
    for cx in contexts {
        let Some(r) = with_equivalence(cx, &mut [&mut flat, &mut circle, &mut uv]) else { continue };
        flat.record(cx.k, r.tau_flatness);
        circle.record(cx.k, r.det_circle_defect);
        uv.record(cx.k, r.uv_identity_defect);
        if !r.skipped_taus.is_empty() {
            notes.push(format!("k = {}: {} tau samples skipped", cx.k, r.skipped_taus.len()));
        }
    }
    (vec![flat, circle, uv], notes)
}

fn equivalence_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let mut re = Check::new("re_match", options.tolerances.equivalence);
    let mut theta = Check::new("theta_product", options.tolerances.flatness);
    for cx in contexts {
        let Some(r) = with_equivalence(cx, &mut [&mut re, &mut theta]) else { continue };
        re.record(cx.k, r.re_match_defect);
        theta.record(cx.k, r.theta_product_defect);
    }
    (vec![re, theta], Vec::new())
}

fn im_formula_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let mut im = Check::new("im_formula", options.tolerances.im_formula);
    let mut sign = Check::new("negative_imaginary_part", 0.0);
    let mut notes = Vec::new();
    for cx in contexts {
        let Some(r) = with_equivalence(cx, &mut [&mut im, &mut sign]) else { continue };
        im.record(cx.k, r.im_formula_defect);
        sign.record(cx.k, if r.eta_c.im < 0.0 { -r.eta_c.im } else { 0.0 });
        if r.slope_at_least_one {
            notes.push(format!(
                "k = {}: slope(tau0) = {} >= 1, atanh undefined; compared tanh(Im eta') instead",
                cx.k, r.slope_at_tau0
            ));
        }
    }
    (vec![im, sign], notes)
}

fn ts_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let tol = options.tolerances.ts_relations;
    let mut s_rel = Check::new("s_from_t", tol);
    let mut t_rel = Check::new("t_from_conjugate_k", tol);
    let mut t_im = Check::new("t_imaginary_negated", tol);
    let mut tr = Check::new("transform_vs_direct", tol);
    let mut literal: f64 = 0.0;
    for cx in contexts {
        let Some(r) = with_equivalence(cx, &mut [&mut s_rel, &mut t_rel, &mut t_im, &mut tr]) else { continue };
        let v = r.variant_relations;
        s_rel.record(cx.k, v.s_relation_defect);
        t_rel.record(cx.k, v.t_conjugate_relation_defect);
        t_im.record(cx.k, v.t_imag_defect);
        tr.record(cx.k, v.transform_route_defect);
        literal = literal.max(v.t_relation_defect);
    }
    let notes = vec![format!(
        "a^T_v = i (a'_v)* (sign as usually quoted) misses by up to {literal:.3e}; the bilinear product gives a^T_v = -i (a'_v)*"
    )];
    (vec![s_rel, t_rel, t_im, tr], notes)
}

fn lmatrix_suite(contexts: &[KContext], basis: &BasisSet, options: &VerifyOptions) -> SuiteOutput {
    let tol = &options.tolerances;
    let mut corr = Check::new("correspondence", tol.lmatrix);
    let mut near = Check::new("correspondence_near_pole", tol.lmatrix_near_pole);
    let mut inv = Check::new("rotation_invariants", tol.lmatrix_invariance);
    let mut route = Check::new("l_route", tol.routes);
    let mut notes = Vec::new();
    let overlap = basis.overlap();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x4c);
    for cx in contexts {
        let dec = match &cx.decomposition {
            Some(Ok(d)) => d,
            Some(Err(e)) => {
                for c in [&mut corr, &mut near, &mut inv, &mut route] {
                    c.error(cx.k, e);
                }
                continue;
            }
            None => continue,
        };
        let l_scale = dec.l.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let taus: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..PI)).collect();
        for &tau in &taus {
            let lb = dec.rotated(tau);
            let d = (lmatrix::det2(&lb) - dec.det_l).abs() / dec.det_l.abs().max(l_scale * l_scale);
            let a = (lb[0][1] - lb[1][0] - dec.k_tilde).abs() / l_scale;
            let t = (lb[0][0] + lb[1][1] - dec.l[0][0] - dec.l[1][1]).abs() / l_scale;
            inv.record(cx.k, d.max(a).max(t));
        }
        let Some(c) = with_coeffs(cx, &mut [&mut corr, &mut near, &mut route]) else { continue };
        if dec.near_pole {
            notes.push(format!("k = {}: within the pole window of E_f", cx.k));
            match interpolated_correspondence(cx, basis, &overlap) {
                Ok(r) => near.record(cx.k, r),
                Err(e) => near.error(cx.k, e),
            }
        } else {
            corr.record(cx.k, lmatrix::correspondence_check(dec, c).max_relative);
        }
        if cx.degenerate() {
            route.skip(cx.k);
            continue;
        }
        for &tau in &taus {
            if let (Ok(a), Ok(b)) = (lmatrix::eta_via_l(dec, tau), kohn_real::eta_via_determinants(c, tau)) {
                route.record(cx.k, wrap_phase(a - b).abs());
            }
        }
    }
    (vec![corr, near, inv, route], notes)
}

/// Correspondence residual at a k inside a pole window: the L-side values are
/// interpolated from two flanking k and compared with the coefficients at k.
fn interpolated_correspondence(cx: &KContext, basis: &BasisSet, overlap: &[Vec<f64>]) -> Result<f64> {
    let c = cx.coeffs.as_ref().map_err(Clone::clone)?;
    let dk = 1e-4 * cx.k;
    let side = |k: f64| -> Result<[f64; 5]> {
        let t = assemble_elements(&cx.problem.with_k(k), basis)?;
        let d = lmatrix::decompose(&t, overlap)?;
        let f = d.f_product;
        let l = d.l;
        Ok([f * l[0][0], f * l[1][1], -f * (l[0][1] + l[1][0]), f * l[0][1], f * d.det_l / d.k_tilde])
    };
    let lo = side(cx.k - dk)?;
    let hi = side(cx.k + dk)?;
    let want = [c.cal_a, c.cal_c, c.cal_b, c.cal_at, c.gamma];
    let worst = (0..5)
        .map(|i| (0.5 * (lo[i] + hi[i]) - want[i]).abs())
        .fold(0.0f64, f64::max);
    Ok(worst / c.scale())
}

fn slope_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let mut fd = Check::new("finite_difference_relative", options.tolerances.slope_fd);
    let mut nonneg = Check::new("negative_slope", 0.0);
    let mut notes = Vec::new();
    let taus = uniform_taus(options.slope_points, 0.25);
    for cx in contexts {
        let Some(c) = with_coeffs(cx, &mut [&mut fd, &mut nonneg]) else { continue };
        if cx.degenerate() {
            fd.skip(cx.k);
            nonneg.skip(cx.k);
            continue;
        }
        let mut skipped = 0;
        for &tau in &taus {
            let Ok(centre) = kohn_real::solve_conditioned(&cx.ct, tau) else {
                skipped += 1;
                continue;
            };
            let h = kohn_real::difference_step(c, tau);
            let eta = |x: f64| {
                kohn_real::solve_conditioned(&cx.ct, x)
                    .map(|s| wrap_phase(s.eta_v - centre.eta_v))
                    .unwrap_or(f64::NAN)
            };
            let numeric = kohn_real::central_derivative(eta, tau, h);
            let Ok(analytic) = kohn_real::slope(c, tau) else {
                skipped += 1;
                continue;
            };
            fd.record(cx.k, (numeric - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE));
            nonneg.record(cx.k, (-numeric).max(0.0).max(-analytic));
        }
        if skipped > 0 {
            notes.push(format!("k = {}: {skipped} singular tau points skipped", cx.k));
        }
    }
    (vec![fd, nonneg], notes)
}

fn routes_suite(contexts: &[KContext], options: &VerifyOptions) -> SuiteOutput {
    let tol = &options.tolerances;
    let mut det_lin = Check::new("determinant_vs_linear", tol.routes);
    let mut opt_tau = Check::new("tau1_minus_tau0", tol.optimizer_tau);
    let mut opt_eta = Check::new("eta1_minus_eta0", tol.routes);
    let mut extremum = Check::new("extremum_formula", tol.routes);
    let mut complex = Check::new("complex_determinant_vs_linear", tol.routes);
    let taus = uniform_taus(options.tau_samples, 0.5);
    for cx in contexts {
        let Some(c) = with_coeffs(cx, &mut [&mut det_lin, &mut opt_tau, &mut opt_eta, &mut extremum]) else {
            continue;
        };
        for &tau in &taus {
            if let (Ok(a), Ok(s)) = (kohn_real::eta_via_determinants(c, tau), kohn_real::solve_conditioned(&cx.ct, tau)) {
                det_lin.record(cx.k, wrap_phase(a - s.eta_v).abs());
            }
        }
        match cx.analysis.as_ref().and_then(|a| a.optimum) {
            Some(o) => {
                opt_tau.record(cx.k, wrap_phase(wrap_tau(o.tau1 - o.tau0) - FRAC_PI_2).abs());
                opt_eta.record(cx.k, wrap_phase(o.eta1 - o.eta0 - FRAC_PI_2).abs());
                match kohn_real::eta_via_determinants(c, o.tau0) {
                    Ok(e) => extremum.record(cx.k, wrap_phase(e - o.eta0).abs()),
                    Err(e) => extremum.error(cx.k, e),
                }
            }
            None => {
                opt_tau.skip(cx.k);
                opt_eta.skip(cx.k);
                extremum.skip(cx.k);
            }
        }
        if let Some(r) = with_equivalence(cx, &mut [&mut complex]) {
            complex.record(cx.k, r.route_defect);
        }
    }
    (vec![det_lin, opt_tau, opt_eta, extremum, complex], Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            ks: vec![0.3, 0.7],
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn default_problem_passes_every_suite() {
        let basis = BasisSet::default_family(8).unwrap();
        let results = run_suites(&RadialProblem::square_well_default(0.5), &basis, &Suite::ALL, &quick());
        for r in &results {
            assert_eq!(r.status, Status::Pass, "{}: {:#?}", r.suite, r.checks);
        }
    }

    #[test]
    fn zero_potential_skips_gamma_checks() {
        let basis = BasisSet::default_family(8).unwrap();
        let results = run_suites(&RadialProblem::new(Potential::Zero, 0.5), &basis, &Suite::ALL, &quick());
        assert!(results.iter().all(|r| r.status != Status::Fail), "{results:#?}");
        let eq = results.iter().find(|r| r.suite == Suite::Equivalence).unwrap();
        assert_eq!(eq.status, Status::Skipped);
    }

    #[test]
    fn truncated_range_fails_theta_suite() {
        let basis = BasisSet::default_family(8).unwrap();
        let mut p = RadialProblem::square_well_default(0.5);
        p.r_max = 4.0;
        let results = run_suites(&p, &basis, &[Suite::Theta], &quick());
        assert_eq!(results[0].status, Status::Fail);
        assert!(results[0].checks[0].worst > 1e-8);
    }

    #[test]
    fn tolerances_must_be_positive() {
        let mut t = Tolerances::default();
        assert!(t.validate().is_ok());
        t.flatness = 0.0;
        assert!(t.validate().unwrap_err().contains("flatness"));
    }
}
