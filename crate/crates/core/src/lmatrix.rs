//! The closed-block-diagonalized formalism: the 2×2 L matrix with its pole
//! sums, the phase shift it yields, and its correspondence with the
//! determinant coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, DetCoefficients};
use crate::kohn_real;
use crate::model::{assemble_elements, BasisSet, ElementTable, RadialProblem};
use crate::{wrap_phase, KohnError, Result};

/// Relative width of the pole-proximity window, `ε_pole / max|E_f|`.
pub const POLE_FACTOR: f64 = 1e-6;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LDecomposition {
    pub k: f64,
    pub k_tilde: f64,
    pub energy: f64,
    /// Eigenvalues of the closed block `<χᵢ,(H-E)χⱼ>`, ascending.
    pub closed_eigenvalues: Vec<f64>,
    /// `E_f - E`: each eigenvalue divided by the norm of its eigenfunction.
    pub energy_gaps: Vec<f64>,
    /// `E_f`.
    pub pole_energies: Vec<f64>,
    /// `<S,χᴰ_f>` at `τ = 0`.
    pub s_coupling: Vec<f64>,
    /// `<C,χᴰ_f>` at `τ = 0`.
    pub c_coupling: Vec<f64>,
    /// `L` at `τ = 0`, row-major.
    pub l: Mat2,
    /// Product of the closed-block eigenvalues, `det` of the closed block.
    pub f_product: f64,
    pub det_l: f64,
    pub pole_tolerance: f64,
    pub near_pole: bool,
}

fn l_from_parts(ss: f64, sc: f64, cs: f64, cc: f64, sd: &[f64], cd: &[f64], lambda: &[f64]) -> Mat2 {
    let mut l = [[ss, sc], [cs, cc]];
    for f in 0..lambda.len() {
        l[0][0] -= sd[f] * sd[f] / lambda[f];
        l[1][1] -= cd[f] * cd[f] / lambda[f];
        l[0][1] -= sd[f] * cd[f] / lambda[f];
        l[1][0] -= cd[f] * sd[f] / lambda[f];
    }
    l
}

pub fn det2(l: &Mat2) -> f64 {
    l[0][0] * l[1][1] - l[0][1] * l[1][0]
}

/// Diagonalize the closed block and fold it into the open 2×2 problem.
///
/// `overlap` holds the plain closed-function overlaps; it only sets the
/// energy scale of the pole-proximity flag.
pub fn decompose(table: &ElementTable, overlap: &[Vec<f64>]) -> Result<LDecomposition> {
    let m = table.m();
    if overlap.len() != m || overlap.iter().any(|r| r.len() != m) {
        return Err(KohnError::Domain(format!("overlap must be {m}x{m}")));
    }
    let energy = 0.5 * table.k * table.k;
    let closed = DMatrix::from_fn(m, m, |i, j| table.chi_chi[i][j]);
    let (values, vectors) = if m == 0 {
        (Vec::new(), DMatrix::zeros(0, 0))
    } else {
        let eig = closed.symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut lambda = Vec::with_capacity(m);
    let mut gaps = Vec::with_capacity(m);
    let mut sd = Vec::with_capacity(m);
    let mut cd = Vec::with_capacity(m);
    for &f in &order {
        let v = vectors.column(f);
        let norm: f64 = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| v[i] * overlap[i][j] * v[j])
            .sum();
        lambda.push(values[f]);
        gaps.push(values[f] / norm);
        sd.push((0..m).map(|i| v[i] * table.s_chi[i]).sum());
        cd.push((0..m).map(|i| v[i] * table.c_chi[i]).sum());
    }
    let pole_energies: Vec<f64> = gaps.iter().map(|g| energy + g).collect();
    let pole_tolerance = POLE_FACTOR * pole_energies.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let near_pole = gaps.iter().any(|g| g.abs() < pole_tolerance);
    let l = l_from_parts(table.ss, table.sc, table.cs, table.cc, &sd, &cd, &lambda);
    Ok(LDecomposition {
        k: table.k,
        k_tilde: table.k_tilde,
        energy,
        f_product: lambda.iter().product(),
        det_l: det2(&l),
        closed_eigenvalues: lambda,
        energy_gaps: gaps,
        pole_energies,
        s_coupling: sd,
        c_coupling: cd,
        l,
        pole_tolerance,
        near_pole,
    })
}

/// Assemble the table for `problem` and decompose it.
pub fn decompose_problem(problem: &RadialProblem, basis: &BasisSet) -> Result<(ElementTable, LDecomposition)> {
    let table = assemble_elements(problem, basis)?;
    let dec = decompose(&table, &basis.overlap())?;
    Ok((table, dec))
}

impl LDecomposition {
    /// `L̄(τ) = R L Rᵀ` with `R = [[cos τ, sin τ], [-sin τ, cos τ]]`.
    pub fn rotated(&self, tau: f64) -> Mat2 {
        let (s, c) = tau.sin_cos();
        let r = [[c, s], [-s, c]];
        let mut rl = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rl[i][j] = r[i][0] * self.l[0][j] + r[i][1] * self.l[1][j];
            }
        }
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = rl[i][0] * r[j][0] + rl[i][1] * r[j][1];
            }
        }
        out
    }

    /// `L̄(τ)` summed directly from the rotated free functions.
    pub fn rotated_direct(&self, table: &ElementTable, tau: f64) -> Mat2 {
        let rt = algebra::rotate_any(table, tau);
        let (s, c) = tau.sin_cos();
        let sd: Vec<f64> = (0..self.s_coupling.len())
            .map(|f| c * self.s_coupling[f] + s * self.c_coupling[f])
            .collect();
        let cd: Vec<f64> = (0..self.s_coupling.len())
            .map(|f| -s * self.s_coupling[f] + c * self.c_coupling[f])
            .collect();
        l_from_parts(rt.ss, rt.sc, rt.cs, rt.cc, &sd, &cd, &self.closed_eigenvalues)
    }

    /// `det(A; τ)` as `F · L̄₂₂(τ)`.
    pub fn det_a(&self, tau: f64) -> f64 {
        self.f_product * self.rotated(tau)[1][1]
    }

    /// Indices of closed eigenvalues inside the pole window.
    pub fn poles_near(&self) -> Vec<usize> {
        (0..self.energy_gaps.len())
            .filter(|&f| self.energy_gaps[f].abs() < self.pole_tolerance)
            .collect()
    }
}

/// `tan(η - τ) = -L̄₂₁/L̄₂₂ - det(L) / (k̃ L̄₂₂)`.
pub fn eta_via_l(dec: &LDecomposition, tau: f64) -> Result<f64> {
    let lb = dec.rotated(tau);
    if lb[1][1] == 0.0 || !lb[1][1].is_finite() {
        return Err(KohnError::Singularity { tau, what: "L22 = 0" });
    }
    let t = -lb[1][0] / lb[1][1] - dec.det_l / (dec.k_tilde * lb[1][1]);
    Ok(wrap_phase(tau + t.atan()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    /// `A - F L₁₁`.
    pub cal_a: f64,
    /// `C - F L₂₂`.
    pub cal_c: f64,
    /// `B + F (L₁₂ + L₂₁)`.
    pub cal_b: f64,
    /// `Ã - F L₁₂`.
    pub cal_at: f64,
    /// `(2Ã + B) - F k̃`.
    pub ks_combination: f64,
    /// `Γ - F det(L) / k̃`.
    pub gamma: f64,
    /// Largest residual over the coefficient scale.
    pub max_relative: f64,
    pub near_pole: bool,
}

pub fn correspondence_check(dec: &LDecomposition, coeffs: &DetCoefficients) -> CorrespondenceReport {
    let f = dec.f_product;
    let l = &dec.l;
    let cal_a = coeffs.cal_a - f * l[0][0];
    let cal_c = coeffs.cal_c - f * l[1][1];
    let cal_b = coeffs.cal_b + f * (l[0][1] + l[1][0]);
    let cal_at = coeffs.cal_at - f * l[0][1];
    let ks_combination = 2.0 * coeffs.cal_at + coeffs.cal_b - f * dec.k_tilde;
    let gamma = coeffs.gamma - f * dec.det_l / dec.k_tilde;
    let scale = coeffs.scale();
    let max_relative = [cal_a, cal_c, cal_b, cal_at, ks_combination, gamma]
        .iter()
        .fold(0.0f64, |a, r| a.max(r.abs()))
        / scale;
    CorrespondenceReport {
        cal_a,
        cal_c,
        cal_b,
        cal_at,
        ks_combination,
        gamma,
        max_relative,
        near_pole: dec.near_pole,
    }
}

/// One point of a k sweep through the L-matrix route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: f64,
    pub tau0: f64,
    pub eta: f64,
    pub f_product: f64,
    pub near_pole: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub points: Vec<SweepPoint>,
    /// Grid intervals across which the sign of `F` changes, i.e. some `E_f` crosses `E`.
    pub crossings: Vec<usize>,
    /// Largest `|Δη|` over an interval relative to the larger neighbouring step.
    pub worst_jump_ratio: f64,
    pub worst_interval: usize,
}

/// Jump ratio of each step of `values` against its neighbours; steps are
/// taken modulo π.
pub fn jump_ratios(values: &[f64]) -> Vec<f64> {
    let steps: Vec<f64> = values.windows(2).map(|w| wrap_phase(w[1] - w[0]).abs()).collect();
    let floor = 1e-9;
    (0..steps.len())
        .map(|i| {
            let left = if i > 0 { steps[i - 1] } else { 0.0 };
            let right = steps.get(i + 1).copied().unwrap_or(0.0);
            steps[i] / left.max(right).max(floor)
        })
        .collect()
}

/// Track `η` from the L-matrix route at the slope-minimizing `τ` over `ks`.
pub fn continuity_sweep(problem: &RadialProblem, basis: &BasisSet, ks: &[f64]) -> Result<ContinuityReport> {
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let (table, dec) = decompose_problem(&problem.with_k(k), basis)?;
        let coeffs = algebra::extract_det_coefficients(&table)?;
        let opt = kohn_real::optimize_tau(&coeffs)
            .optimum
            .ok_or_else(|| KohnError::Degenerate(format!("no optimized tau at k = {k}")))?;
        points.push(SweepPoint {
            k,
            tau0: opt.tau0,
            eta: eta_via_l(&dec, opt.tau0)?,
            f_product: dec.f_product,
            near_pole: dec.near_pole,
        });
    }
    let crossings = points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].f_product.signum() != w[1].f_product.signum())
        .map(|(i, _)| i)
        .collect();
    let etas: Vec<f64> = points.iter().map(|p| p.eta).collect();
    let ratios = jump_ratios(&etas);
    let (worst_interval, worst_jump_ratio) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, r)| if r > best.1 { (i, r) } else { best });
    Ok(ContinuityReport {
        points,
        crossings,
        worst_jump_ratio,
        worst_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(k: f64) -> (ElementTable, LDecomposition) {
        decompose_problem(&RadialProblem::square_well_default(k), &BasisSet::default_family(8).unwrap()).unwrap()
    }

    #[test]
    fn empty_basis_gives_bare_integrals() {
        let (t, d) = decompose_problem(&RadialProblem::square_well_default(0.5), &BasisSet::empty()).unwrap();
        assert_eq!(d.f_product, 1.0);
        assert_eq!(d.l, [[t.ss, t.sc], [t.cs, t.cc]]);
        let c = algebra::extract_det_coefficients(&t).unwrap();
        assert!(correspondence_check(&d, &c).max_relative < 1e-14);
    }

    #[test]
    fn antisymmetry_survives_folding() {
        for k in [0.2, 0.5, 0.9] {
            let (_, d) = setup(k);
            assert!((d.l[0][1] - d.l[1][0] - d.k_tilde).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn rotation_is_a_congruence() {
        let (t, d) = setup(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let tau = rng.random_range(0.0..std::f64::consts::PI);
            let a = d.rotated(tau);
            let b = d.rotated_direct(&t, tau);
            let scale = d.l.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-10 * scale);
                }
            }
            assert!((det2(&a) - d.det_l).abs() < 1e-10 * d.det_l.abs().max(scale * scale) );
            assert!((a[0][1] - a[1][0] - d.k_tilde).abs() < 1e-10 * scale);
            assert!((a[0][0] + a[1][1] - d.l[0][0] - d.l[1][1]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn det_a_factorizes() {
        let (t, d) = setup(0.5);
        let c = algebra::extract_det_coefficients(&t).unwrap();
        for tau in [0.3, 1.1, 2.5] {
            assert!((d.det_a(tau) - c.g(tau)).abs() < 1e-9 * c.scale());
        }
    }

    #[test]
    fn correspondences_hold() {
        for k in [0.1, 0.3, 0.5, 0.7, 1.0] {
            let (t, d) = setup(k);
            let c = algebra::extract_det_coefficients(&t).unwrap();
            let r = correspondence_check(&d, &c);
            assert!(r.max_relative < 1e-8, "k={k}: {r:?}");
        }
    }

    #[test]
    fn l_route_matches_determinant_route() {
        let (t, d) = setup(0.6);
        let c = algebra::extract_det_coefficients(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..8 {
            let tau = rng.random_range(0.0..std::f64::consts::PI);
            let a = eta_via_l(&d, tau).unwrap();
            let b = kohn_real::eta_via_determinants(&c, tau).unwrap();
            assert!(wrap_phase(a - b).abs() < 1e-9, "tau={tau}: {a} vs {b}");
        }
    }

    #[test]
    fn zero_potential_gives_zero_phase() {
        let p = RadialProblem::new(Potential::Zero, 0.4);
        let (_, d) = decompose_problem(&p, &BasisSet::default_family(8).unwrap()).unwrap();
        for tau in [0.0, 0.8, 2.0] {
            assert!(eta_via_l(&d, tau).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn jump_ratio_spots_a_step() {
        let mut v: Vec<f64> = (0..20).map(|i| 0.01 * i as f64).collect();
        assert!(jump_ratios(&v).iter().all(|r| *r < 1.5));
        for x in v.iter_mut().skip(10) {
            *x += 0.5;
        }
        assert!(jump_ratios(&v)[9] > 10.0);
    }
}
