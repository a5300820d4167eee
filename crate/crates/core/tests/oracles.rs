//! The pipeline against independent computations: brute-force small-basis
//! algebra, direct integration, and a Jacobi eigensolver.

use std::f64::consts::PI;

use kohnlab::algebra::extract_det_coefficients;
use kohnlab::kohn_real;
use kohnlab::lmatrix;
use kohnlab::model::{assemble_elements, BasisSet, Potential, RadialProblem};
use kohnlab::oracle;
use kohnlab::wrap_phase;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

#[test]
fn brute_force_matches_pipeline_for_small_bases() {
    for m in 0..=2 {
        let basis = BasisSet::default_family(m).unwrap();
        for k in [0.2, 0.5, 0.9] {
            let t = assemble_elements(&RadialProblem::square_well_default(k), &basis).unwrap();
            let c = extract_det_coefficients(&t).unwrap();
            for tau in [0.1, 0.7, 1.3, 2.2, 2.9] {
                let bf = oracle::brute_force_small_m(&t, tau).unwrap();
                let s = c.scale();
                let b = bf.coefficients;
                assert!(rel(b.cal_a, c.cal_a, s) < 1e-12, "M={m} k={k}");
                assert!(rel(b.cal_b, c.cal_b, s) < 1e-12, "M={m} k={k}");
                assert!(rel(b.cal_c, c.cal_c, s) < 1e-12, "M={m} k={k}");
                assert!(rel(b.cal_at, c.cal_at, s) < 1e-12, "M={m} k={k}");
                assert!(rel(b.gamma, c.gamma, s) < 1e-12, "M={m} k={k}");
                if c.g(tau).abs() > 1e-3 * s {
                    let lin = kohn_real::solve_at(&t, tau).unwrap().eta_v;
                    assert!(wrap_phase(bf.eta_v - lin).abs() < 1e-12, "M={m} k={k} tau={tau}");
                    assert!(wrap_phase(bf.eta_det - lin).abs() < 1e-12, "M={m} k={k} tau={tau}");
                }
            }
        }
    }
}

#[test]
fn ode_oracle_agrees_with_closed_form_for_several_wells() {
    for (depth, radius) in [(0.5, 1.0), (1.0, 1.0), (2.0, 0.7), (3.0, 1.5)] {
        for k in [0.15, 0.6, 1.2] {
            let p = RadialProblem::new(Potential::SquareWell { depth, radius }, k);
            let ode = oracle::exact_phase_shift(&p).unwrap();
            let exact = oracle::square_well_phase(k, depth, radius);
            assert!(wrap_phase(ode.eta_exact - exact).abs() < 1e-8, "V0={depth} a={radius} k={k}");
        }
    }
}

#[test]
fn variational_error_does_not_grow_with_basis_size() {
    let p = RadialProblem::new(Potential::Exponential { strength: 1.0, range: 1.0 }, 0.5);
    let exact = oracle::exact_phase_shift(&p).unwrap().eta_exact;
    let errors: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&m| {
            let t = assemble_elements(&p, &BasisSet::default_family(m).unwrap()).unwrap();
            let c = extract_det_coefficients(&t).unwrap();
            let eta0 = kohn_real::optimize_tau(&c).optimum.unwrap().eta0;
            wrap_phase(eta0 - exact).abs()
        })
        .collect();
    assert!(errors[1] <= errors[0] && errors[2] <= errors[1], "{errors:?}");
    assert!(errors[2] < 1e-6, "{errors:?}");
}

#[test]
fn weak_potential_is_close_to_born() {
    let p = RadialProblem::new(Potential::Exponential { strength: 1e-4, range: 1.0 }, 0.5);
    let exact = oracle::exact_phase_shift(&p).unwrap().eta_exact;
    let born = oracle::born_phase(&p);
    assert!((exact - born).abs() < 1e-3 * born.abs());
}

/// Cyclic Jacobi rotations on a symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    d.sort_by(f64::total_cmp);
    d
}

#[test]
fn closed_eigenvalues_match_jacobi() {
    for k in [0.3, 0.7] {
        let (t, dec) = lmatrix::decompose_problem(&RadialProblem::square_well_default(k), &BasisSet::default_family(8).unwrap()).unwrap();
        let reference = jacobi_eigenvalues(t.chi_chi.clone());
        let scale = reference.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in dec.closed_eigenvalues.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12 * scale, "k={k}: {a} vs {b}");
        }
        let product: f64 = reference.iter().product();
        let bound: f64 = reference.iter().map(|v| 1e-12 * scale / v.abs()).sum();
        assert!((dec.f_product - product).abs() < bound * product.abs());
    }
}

#[test]
fn bisected_level_crossing_is_flagged_near_a_pole() {
    let basis = BasisSet::default_family(8).unwrap();
    let f_at = |k: f64| {
        lmatrix::decompose_problem(&RadialProblem::square_well_default(k), &basis)
            .unwrap()
            .1
            .f_product
    };
    let (mut lo, mut hi) = (0.55, 0.58);
    assert!(f_at(lo).signum() != f_at(hi).signum());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f_at(mid).signum() == f_at(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    let (_, dec) = lmatrix::decompose_problem(&RadialProblem::square_well_default(k), &basis).unwrap();
    assert!(dec.near_pole, "k={k}: gaps {:?}", dec.energy_gaps);
    let f = dec.poles_near()[0];
    assert!((dec.pole_energies[f] - 0.5 * k * k).abs() < 1e-6 * dec.pole_energies[f]);

    // away from the crossing nothing is flagged, and the phase stays continuous through it
    let (_, far) = lmatrix::decompose_problem(&RadialProblem::square_well_default(0.3), &basis).unwrap();
    assert!(!far.near_pole);
    let ks: Vec<f64> = (0..21).map(|i| k - 1e-3 + 1e-4 * i as f64).collect();
    let sweep = lmatrix::continuity_sweep(&RadialProblem::square_well_default(k), &basis, &ks).unwrap();
    assert_eq!(sweep.crossings.len(), 1);
    assert!(sweep.worst_jump_ratio < 10.0, "{}", sweep.worst_jump_ratio);
}

#[test]
fn l_route_phase_matches_linear_solve() {
    let basis = BasisSet::default_family(8).unwrap();
    for k in [0.25, 0.75] {
        let (t, dec) = lmatrix::decompose_problem(&RadialProblem::square_well_default(k), &basis).unwrap();
        for i in 0..8 {
            let tau = PI * (i as f64 + 0.3) / 8.0;
            let Ok(lin) = kohn_real::solve_at(&t, tau) else { continue };
            assert!(wrap_phase(lmatrix::eta_via_l(&dec, tau).unwrap() - lin.eta_v).abs() < 1e-9);
        }
    }
}
