//! Browser bindings: each export takes plain numbers and returns a JSON
//! string for `www/main.js` to plot.

use kohnlab::algebra::extract_det_coefficients;
use kohnlab::kohn_complex::{self, Variant};
use kohnlab::kohn_real::{self, TauAnalysis};
use kohnlab::model::{assemble_elements, BasisSet, Potential, RadialProblem};
use kohnlab::oracle;
use kohnlab::scanner::{self, TauPoint};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 4096;

fn setup(depth: f64, radius: f64, k: f64, m: usize) -> Result<(RadialProblem, BasisSet), String> {
    let problem = RadialProblem::new(Potential::SquareWell { depth, radius }, k);
    problem.validate().map_err(|e| e.to_string())?;
    let basis = BasisSet::default_family(m).map_err(|e| e.to_string())?;
    Ok((problem, basis))
}

fn check_count(count: usize) -> Result<(), String> {
    if (2..=MAX_POINTS).contains(&count) {
        Ok(())
    } else {
        Err(format!("point count must be between 2 and {MAX_POINTS}, got {count}"))
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TauProfile {
    points: Vec<TauPoint>,
    analysis: TauAnalysis,
    exact: Option<f64>,
}

/// `η(τ)`, `det A(τ)` and the slope over `[0, π)`, with the optimized and
/// singular `τ` marked.
pub fn tau_profile_json(depth: f64, radius: f64, k: f64, m: usize, count: usize) -> Result<String, String> {
    check_count(count)?;
    let (problem, basis) = setup(depth, radius, k, m)?;
    let points = scanner::tau_scan(&problem, &basis, count).map_err(|e| e.to_string())?;
    let table = assemble_elements(&problem, &basis).map_err(|e| e.to_string())?;
    let coeffs = extract_det_coefficients(&table).map_err(|e| e.to_string())?;
    json(&TauProfile {
        points,
        analysis: kohn_real::optimize_tau(&coeffs),
        exact: oracle::exact_phase_shift(&problem).ok().map(|o| o.eta_exact),
    })
}

#[derive(Serialize)]
struct KPoint {
    k: f64,
    eta0: Option<f64>,
    re_eta_c: Option<f64>,
    im_eta_c: Option<f64>,
    exact: Option<f64>,
    singular_taus: Option<usize>,
    error: String,
}

/// Optimized real and complex phase shifts against the exact one over a k grid.
pub fn k_scan_json(depth: f64, radius: f64, k_min: f64, k_max: f64, count: usize, m: usize) -> Result<String, String> {
    check_count(count)?;
    if !(k_min > 0.0 && k_max > k_min) {
        return Err(format!("need 0 < k_min < k_max, got [{k_min}, {k_max}]"));
    }
    let (problem, basis) = setup(depth, radius, k_min, m)?;
    let points: Vec<KPoint> = (0..count)
        .map(|i| {
            let k = k_min + (k_max - k_min) * i as f64 / (count - 1) as f64;
            let p = problem.with_k(k);
            let exact = oracle::exact_phase_shift(&p).ok().map(|o| o.eta_exact);
            let mut point = KPoint {
                k,
                eta0: None,
                re_eta_c: None,
                im_eta_c: None,
                exact,
                singular_taus: None,
                error: String::new(),
            };
            let table = match assemble_elements(&p, &basis) {
                Ok(t) => t,
                Err(e) => {
                    point.error = e.to_string();
                    return point;
                }
            };
            if let Ok(c) = extract_det_coefficients(&table) {
                let a = kohn_real::optimize_tau(&c);
                point.eta0 = a.optimum.map(|o| o.eta0);
                point.singular_taus = Some(a.singular_taus.len());
            }
            match kohn_complex::solve_complex(&table, 0.0, Variant::K) {
                Ok(s) => {
                    point.re_eta_c = Some(s.eta_v.re);
                    point.im_eta_c = Some(s.eta_v.im);
                }
                Err(e) => point.error = e.to_string(),
            }
            point
        })
        .collect();
    json(&points)
}

#[derive(Serialize)]
struct CirclePoint {
    tau: f64,
    re: f64,
    im: f64,
    det_real: f64,
}

#[derive(Serialize)]
struct DetCircle {
    radius: f64,
    points: Vec<CirclePoint>,
}

/// The complex determinant `det A'(τ)` traced over `[0, π)`, beside the real
/// `det A(τ)`.
pub fn det_circle_json(depth: f64, radius: f64, k: f64, m: usize, count: usize) -> Result<String, String> {
    check_count(count)?;
    let (problem, basis) = setup(depth, radius, k, m)?;
    let table = assemble_elements(&problem, &basis).map_err(|e| e.to_string())?;
    let c = extract_det_coefficients(&table).map_err(|e| e.to_string())?;
    let points = (0..count)
        .map(|i| {
            let tau = std::f64::consts::PI * i as f64 / count as f64;
            let d = kohn_complex::det_a_prime(&c, tau);
            CirclePoint {
                tau,
                re: d.re,
                im: d.im,
                det_real: c.g(tau),
            }
        })
        .collect();
    json(&DetCircle {
        radius: c.cal_bt.hypot(c.cal_b),
        points,
    })
}

#[wasm_bindgen]
pub fn tau_profile(depth: f64, radius: f64, k: f64, m: usize, count: usize) -> Result<String, JsValue> {
    tau_profile_json(depth, radius, k, m, count).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn k_scan(depth: f64, radius: f64, k_min: f64, k_max: f64, count: usize, m: usize) -> Result<String, JsValue> {
    k_scan_json(depth, radius, k_min, k_max, count, m).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn det_circle(depth: f64, radius: f64, k: f64, m: usize, count: usize) -> Result<String, JsValue> {
    det_circle_json(depth, radius, k, m, count).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn tau_profile_marks_the_optimum() {
        let v: Value = serde_json::from_str(&tau_profile_json(1.0, 1.0, 0.5, 8, 64).unwrap()).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 64);
        assert!(v["analysis"]["optimum"]["tau0"].is_number());
        assert!(v["exact"].is_number());
    }

    #[test]
    fn k_scan_real_and_complex_agree() {
        let v: Value = serde_json::from_str(&k_scan_json(1.0, 1.0, 0.2, 0.8, 4, 6).unwrap()).unwrap();
        for p in v.as_array().unwrap() {
            let a = p["eta0"].as_f64().unwrap();
            let b = p["re_eta_c"].as_f64().unwrap();
            assert!((a - b).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn det_circle_has_constant_modulus() {
        let v: Value = serde_json::from_str(&det_circle_json(1.0, 1.0, 0.5, 8, 32).unwrap()).unwrap();
        let r = v["radius"].as_f64().unwrap();
        for p in v["points"].as_array().unwrap() {
            let m = p["re"].as_f64().unwrap().hypot(p["im"].as_f64().unwrap());
            assert!((m - r).abs() < 1e-12 * r);
        }
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(tau_profile_json(-1.0, 1.0, 0.5, 8, 64).is_err());
        assert!(k_scan_json(1.0, 1.0, 0.5, 0.2, 4, 8).is_err());
        assert!(det_circle_json(1.0, 1.0, 0.5, 9, 32).is_err());
        assert!(det_circle_json(1.0, 1.0, 0.5, 8, 1).is_err());
    }
}
