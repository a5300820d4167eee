//! k-scans and τ-scans with CSV and JSON output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::algebra::{self, ConditionedTable};
use crate::kohn_complex::{self, EquivalenceOptions, Variant};
use crate::kohn_real::{self, Degeneracy};
use crate::lmatrix;
use crate::model::{assemble_elements, BasisSet, RadialProblem};
use crate::verify::{Suite, SuiteResult};
use crate::{KohnError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGrid {
    pub k_min: f64,
    pub k_max: f64,
    pub count: usize,
}

impl KGrid {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.k_max - self.k_min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.k_min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub k_grid: KGrid,
    /// Uniform `tau` samples over `[0, π)` used by per-row checks.
    pub tau_count: usize,
    /// Seed for the random `tau` samples.
    pub seed: u64,
    /// Verification suites to run over the same k grid.
    #[serde(default)]
    pub checks: Vec<Suite>,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            k_grid: KGrid {
                k_min: 0.1,
                k_max: 1.0,
                count: 10,
            },
            tau_count: 16,
            seed: 0x5eed,
            checks: Vec::new(),
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        let g = &self.k_grid;
        if g.count < 2 {
            return Err(KohnError::Domain(format!("k grid count must be >= 2, got {}", g.count)));
        }
        if !(g.k_min > 0.0 && g.k_min.is_finite()) {
            return Err(KohnError::Domain(format!("k_min must be > 0, got {}", g.k_min)));
        }
        if !(g.k_max > g.k_min && g.k_max.is_finite()) {
            return Err(KohnError::Domain(format!(
                "k_max must exceed k_min, got [{}, {}]",
                g.k_min, g.k_max
            )));
        }
        if self.tau_count < 2 {
            return Err(KohnError::Domain(format!("tau count must be >= 2, got {}", self.tau_count)));
        }
        Ok(())
    }
}

/// One k of a scan. Numeric fields are empty when that stage failed; the
/// reason is in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub k: f64,
    pub tau0: Option<f64>,
    pub tau1: Option<f64>,
    pub eta0: Option<f64>,
    pub eta1: Option<f64>,
    pub slope_at_tau0: Option<f64>,
    pub gamma: Option<f64>,
    pub re_eta_c: Option<f64>,
    pub im_eta_c: Option<f64>,
    pub re_match_defect: Option<f64>,
    pub im_formula_defect: Option<f64>,
    pub singular_tau_count: Option<usize>,
    /// Class of each singular `tau`, ascending in `tau`, `;`-separated.
    pub classifications: String,
    pub degenerate_flag: String,
    /// `none`, or the indices of closed eigenvalues inside the pole window.
    pub pole_flags: String,
    pub error: String,
}

impl ScanRow {
    fn empty(k: f64) -> Self {
        Self {
            k,
            tau0: None,
            tau1: None,
            eta0: None,
            eta1: None,
            slope_at_tau0: None,
            gamma: None,
            re_eta_c: None,
            im_eta_c: None,
            re_match_defect: None,
            im_formula_defect: None,
            singular_tau_count: None,
            classifications: String::new(),
            degenerate_flag: String::new(),
            pole_flags: String::new(),
            error: String::new(),
        }
    }
}

/// Fill one row; failures are written into the row.
pub fn scan_row(problem: &RadialProblem, basis: &BasisSet, spec: &ScanSpec, k: f64) -> ScanRow {
    let mut row = ScanRow::empty(k);
    if let Err(e) = fill_row(&mut row, problem, basis, spec) {
        row.error = e.to_string();
    }
    row
}

fn fill_row(row: &mut ScanRow, problem: &RadialProblem, basis: &BasisSet, spec: &ScanSpec) -> Result<()> {
    let table = assemble_elements(&problem.with_k(row.k), basis)?;
    let dec = lmatrix::decompose(&table, &basis.overlap())?;
    let poles = dec.poles_near();
    row.pole_flags = if poles.is_empty() {
        "none".into()
    } else {
        poles.iter().map(|f| format!("f{f}")).collect::<Vec<_>>().join(";")
    };

    let ct = ConditionedTable::new(&table);
    let coeffs = algebra::extract_conditioned(&ct)?;
    row.gamma = Some(coeffs.gamma);
    let analysis = kohn_real::optimize_tau(&coeffs);
    row.singular_tau_count = Some(analysis.singular_taus.len());
    row.classifications = analysis
        .singular_taus
        .iter()
        .map(|s| s.class.label())
        .collect::<Vec<_>>()
        .join(";");
    row.degenerate_flag = analysis.degenerate.label().into();
    if analysis.degenerate != Degeneracy::None {
        // Γ = 0: every τ gives the same estimate and the complex method reproduces it
        let sol = kohn_complex::solve_complex_conditioned(&ct, 0.0, Variant::K)?;
        row.re_eta_c = Some(sol.eta_v.re);
        row.im_eta_c = Some(sol.eta_v.im);
        return Ok(());
    }
    let opt = analysis.optimum.expect("non-degenerate analysis has an optimum");
    row.tau0 = Some(opt.tau0);
    row.tau1 = Some(opt.tau1);
    row.eta0 = Some(opt.eta0);
    row.eta1 = Some(opt.eta1);
    row.slope_at_tau0 = Some(opt.slope_at_tau0);

    let options = EquivalenceOptions {
        tau_grid: spec.tau_count,
        random_taus: 8,
        seed: spec.seed,
    };
    let eq = kohn_complex::equivalence_from_parts(&ct, &coeffs, &options)?;
    row.re_eta_c = Some(eq.eta_c.re);
    row.im_eta_c = Some(eq.eta_c.im);
    row.re_match_defect = Some(eq.re_match_defect);
    row.im_formula_defect = Some(eq.im_formula_defect);
    Ok(())
}

/// One row per k, in k order. Rows are independent and run in parallel when
/// the `parallel` feature is on.
pub fn run_scan(spec: &ScanSpec, problem: &RadialProblem, basis: &BasisSet) -> Result<Vec<ScanRow>> {
    spec.validate()?;
    let ks = spec.k_grid.points();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(ks.par_iter().map(|&k| scan_row(problem, basis, spec, k)).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(ks.iter().map(|&k| scan_row(problem, basis, spec, k)).collect())
    }
}

pub fn write_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| KohnError::Domain(format!("csv: {e}")))?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| KohnError::Domain(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| KohnError::Domain(format!("csv: {e}")))?;
    Ok(())
}

pub const CSV_HEADER: [&str; 16] = [
    "k",
    "tau0",
    "tau1",
    "eta0",
    "eta1",
    "slope_at_tau0",
    "gamma",
    "re_eta_c",
    "im_eta_c",
    "re_match_defect",
    "im_formula_defect",
    "singular_tau_count",
    "classifications",
    "degenerate_flag",
    "pole_flags",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub worst_re_match_defect: f64,
    pub worst_im_formula_defect: f64,
    /// k with at least one singular `tau`.
    pub singular_ks: Vec<f64>,
    pub failed_ks: Vec<f64>,
}

pub fn summarize(rows: &[ScanRow]) -> ScanSummary {
    let worst = |f: fn(&ScanRow) -> Option<f64>| rows.iter().filter_map(f).fold(0.0f64, f64::max);
    ScanSummary {
        worst_re_match_defect: worst(|r| r.re_match_defect),
        worst_im_formula_defect: worst(|r| r.im_formula_defect),
        singular_ks: rows
            .iter()
            .filter(|r| r.singular_tau_count.is_some_and(|n| n > 0))
            .map(|r| r.k)
            .collect(),
        failed_ks: rows.iter().filter(|r| !r.error.is_empty()).map(|r| r.k).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub spec: ScanSpec,
    pub problem: RadialProblem,
    pub basis: BasisSet,
    pub summary: ScanSummary,
    pub rows: Vec<ScanRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<SuiteResult>,
}

impl ScanReport {
    pub fn new(spec: &ScanSpec, problem: &RadialProblem, basis: &BasisSet, rows: Vec<ScanRow>, checks: Vec<SuiteResult>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            spec: spec.clone(),
            problem: *problem,
            basis: basis.clone(),
            summary: summarize(&rows),
            rows,
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scan report serializes");
        s.push('\n');
        s
    }
}

/// `η` and its ingredients at one `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub tau: f64,
    pub det_a: f64,
    /// `None` at a singular `tau`.
    pub eta_v: Option<f64>,
    pub slope: Option<f64>,
    pub f: f64,
}

/// `η(τ)`, `det A(τ)` and the slope on a uniform grid at one k, from the
/// determinant coefficients.
pub fn tau_scan(problem: &RadialProblem, basis: &BasisSet, count: usize) -> Result<Vec<TauPoint>> {
    let table = assemble_elements(problem, basis)?;
    let coeffs = algebra::extract_det_coefficients(&table)?;
    Ok((0..count)
        .map(|i| {
            let tau = std::f64::consts::PI * i as f64 / count as f64;
            TauPoint {
                tau,
                det_a: coeffs.g(tau),
                eta_v: kohn_real::eta_via_determinants(&coeffs, tau).ok(),
                slope: kohn_real::slope(&coeffs, tau).ok(),
                f: coeffs.f(tau),
            }
        })
        .collect())
}

/// Number of sign changes of `det A(τ)` over one period, sampled at `count` points.
pub fn det_sign_changes(samples: &[f64]) -> usize {
    let n = samples.len();
    (0..n)
        .filter(|&i| {
            let (a, b) = (samples[i], samples[(i + 1) % n]);
            a.signum() != b.signum()
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    fn basis() -> BasisSet {
        BasisSet::default_family(8).unwrap()
    }

    #[test]
    fn rows_follow_k_order() {
        let rows = run_scan(&ScanSpec::default(), &RadialProblem::square_well_default(0.5), &basis()).unwrap();
        assert_eq!(rows.len(), 10);
        for (i, r) in rows.iter().enumerate() {
            assert!((r.k - 0.1 * (i + 1) as f64).abs() < 1e-12);
            assert!(r.error.is_empty(), "{}", r.error);
            assert!(r.re_match_defect.unwrap() < 1e-9);
            assert!(r.singular_tau_count.unwrap() <= 2);
        }
    }

    #[test]
    fn zero_potential_rows_are_flat() {
        let rows = run_scan(&ScanSpec::default(), &RadialProblem::new(Potential::Zero, 0.5), &basis()).unwrap();
        for r in rows {
            assert_eq!(r.degenerate_flag, "k_g");
            assert!(r.gamma.unwrap().abs() < 1e-30);
            assert!(r.re_eta_c.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn csv_header_matches_row_fields() {
        let rows = run_scan(&ScanSpec::default(), &RadialProblem::square_well_default(0.5), &basis()).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows[..2], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), CSV_HEADER.join(","));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = ScanSpec::default();
        s.k_grid.k_min = 0.0;
        assert!(s.validate().is_err());
        let mut s = ScanSpec::default();
        s.k_grid.count = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn sign_changes_wrap_around() {
        assert_eq!(det_sign_changes(&[1.0, -1.0, -2.0, 3.0]), 2);
        assert_eq!(det_sign_changes(&[1.0, 2.0]), 0);
    }
}
