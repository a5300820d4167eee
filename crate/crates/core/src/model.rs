//! Radial scattering problems, basis functions and integral assembly.
//!
//! Every integral in an [`ElementTable`] is of the form
//! `<X, Y> = ∫ X(r) (H - E) Y(r) dr` with `H - E = -½ d²/dr² + V(r) - k²/2`.
//! The operator is always applied analytically; no derivative is taken by
//! differencing.

use serde::{Deserialize, Serialize};

use crate::quadrature::CompositeRule;
use crate::{KohnError, Result};

/// Relative tail threshold the potential must reach before `r_max`.
pub const TAIL_THRESHOLD: f64 = 1e-12;
/// Convergence target for a doubling of the quadrature point count.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
/// Maximum number of quadrature refinements attempted by [`assemble_elements`].
pub const MAX_DOUBLINGS: u32 = 5;

/// Short-range radial potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    /// `V(r) = -V0` for `r < a`, zero outside.
    SquareWell {
        #[serde(rename = "V0")]
        depth: f64,
        #[serde(rename = "a")]
        radius: f64,
    },
    /// `V(r) = -V0 exp(-r / a)`; positive `V0` is attractive.
    Exponential {
        #[serde(rename = "V0")]
        strength: f64,
        #[serde(rename = "a")]
        range: f64,
    },
    Zero,
}

impl Potential {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Potential::SquareWell { depth, radius } => {
                if r < radius {
                    -depth
                } else {
                    0.0
                }
            }
            Potential::Exponential { strength, range } => -strength * (-r / range).exp(),
            Potential::Zero => 0.0,
        }
    }

    /// Largest `|V(r)|`.
    pub fn peak(&self) -> f64 {
        match *self {
            Potential::SquareWell { depth, .. } => depth.abs(),
            Potential::Exponential { strength, .. } => strength.abs(),
            Potential::Zero => 0.0,
        }
    }

    /// Points where `V` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Potential::SquareWell { radius, .. } => vec![radius],
            _ => Vec::new(),
        }
    }

    /// Radius beyond which `|V| <= TAIL_THRESHOLD * peak`.
    pub fn support_radius(&self) -> f64 {
        match *self {
            Potential::SquareWell { radius, .. } => radius,
            Potential::Exponential { range, .. } => range * (1.0 / TAIL_THRESHOLD).ln(),
            Potential::Zero => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Potential::SquareWell { depth, radius } => {
                if !(depth > 0.0 && depth.is_finite()) {
                    return Err(KohnError::Domain(format!("square-well depth V0 must be > 0, got {depth}")));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(KohnError::Domain(format!("square-well radius a must be > 0, got {radius}")));
                }
            }
            Potential::Exponential { strength, range } => {
                if !strength.is_finite() {
                    return Err(KohnError::Domain("exponential strength V0 must be finite".into()));
                }
                if !(range > 0.0 && range.is_finite()) {
                    return Err(KohnError::Domain(format!("exponential range a must be > 0, got {range}")));
                }
            }
            Potential::Zero => {}
        }
        Ok(())
    }
}

/// The radial problem at one wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProblem {
    pub potential: Potential,
    pub k: f64,
    /// Normalization constant `N` of the free functions.
    pub norm: f64,
    /// Cutoff steepness of `C`; `None` means `k + 1`.
    pub beta: Option<f64>,
    pub r_max: f64,
    pub n_quad: usize,
}

impl RadialProblem {
    pub const DEFAULT_R_MAX: f64 = 50.0;
    pub const DEFAULT_N_QUAD: usize = 2048;

    pub fn new(potential: Potential, k: f64) -> Self {
        Self {
            potential,
            k,
            norm: 1.0,
            beta: None,
            r_max: Self::DEFAULT_R_MAX,
            n_quad: Self::DEFAULT_N_QUAD,
        }
    }

    /// The acceptance default: square well `V0 = 1`, `a = 1`.
    pub fn square_well_default(k: f64) -> Self {
        Self::new(Potential::SquareWell { depth: 1.0, radius: 1.0 }, k)
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.k * self.k
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.k + 1.0)
    }

    /// `k̃ = N² k / 2`, the value of `<S,C> - <C,S>`.
    pub fn k_tilde(&self) -> f64 {
        0.5 * self.norm * self.norm * self.k
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(KohnError::Domain(format!("k must be > 0, got {}", self.k)));
        }
        if !(self.norm > 0.0 && self.norm.is_finite()) {
            return Err(KohnError::Domain(format!("N must be > 0, got {}", self.norm)));
        }
        let beta = self.beta();
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(KohnError::Domain(format!("beta must be > 0, got {beta}")));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(KohnError::Domain(format!("r_max must be > 0, got {}", self.r_max)));
        }
        if self.n_quad < crate::quadrature::PANEL_ORDER {
            return Err(KohnError::Domain(format!(
                "n_quad must be at least {}, got {}",
                crate::quadrature::PANEL_ORDER,
                self.n_quad
            )));
        }
        let peak = self.potential.peak();
        if peak > 0.0 && self.potential.value(self.r_max).abs() > TAIL_THRESHOLD * peak {
            return Err(KohnError::Domain(format!(
                "potential has not decayed at r_max = {} (needs r_max >= {:.3})",
                self.r_max,
                self.potential.support_radius()
            )));
        }
        Ok(())
    }

    /// `S(r) = N sin(kr)`.
    pub fn s(&self, r: f64) -> f64 {
        self.norm * (self.k * r).sin()
    }

    /// `C(r) = N cos(kr) (1 - exp(-beta r))`.
    pub fn c(&self, r: f64) -> f64 {
        self.norm * (self.k * r).cos() * (-(-self.beta() * r).exp_m1())
    }

    /// `(H - E) S = V S`; `S` solves the free equation.
    pub fn residual_s(&self, r: f64) -> f64 {
        self.potential.value(r) * self.s(r)
    }

    /// `(H - E) C = N e^{-beta r} [k beta sin(kr) + beta²/2 cos(kr)] + V C`.
    pub fn residual_c(&self, r: f64) -> f64 {
        let beta = self.beta();
        let (sin, cos) = (self.k * r).sin_cos();
        self.norm * (-beta * r).exp() * (self.k * beta * sin + 0.5 * beta * beta * cos)
            + self.potential.value(r) * self.c(r)
    }
}

/// One Slater-type short-range function `r^n exp(-alpha r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaterFunction {
    pub power: u32,
    pub exponent: f64,
}

impl SlaterFunction {
    pub fn value(&self, r: f64) -> f64 {
        r.powi(self.power as i32) * (-self.exponent * r).exp()
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let n = self.power as i32;
        let rn1 = if n >= 1 { r.powi(n - 1) } else { 0.0 };
        (n as f64 * rn1 - self.exponent * r.powi(n)) * (-self.exponent * r).exp()
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let n = self.power as i32;
        let a = self.exponent;
        let nf = n as f64;
        let rn2 = if n >= 2 { r.powi(n - 2) } else { 0.0 };
        let rn1 = if n >= 1 { r.powi(n - 1) } else { 0.0 };
        (nf * (nf - 1.0) * rn2 - 2.0 * a * nf * rn1 + a * a * r.powi(n)) * (-a * r).exp()
    }
}

/// Short-range correlation functions `chi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub functions: Vec<SlaterFunction>,
}

impl BasisSet {
    pub const DEFAULT_POWERS: [u32; 4] = [1, 2, 3, 4];
    pub const DEFAULT_EXPONENTS: [f64; 2] = [0.8, 1.6];

    pub fn new(functions: Vec<SlaterFunction>) -> Result<Self> {
        let basis = Self { functions };
        basis.validate()?;
        Ok(basis)
    }

    pub fn empty() -> Self {
        Self { functions: Vec::new() }
    }

    /// The default family: powers 1..=4 at exponent 0.8, then at 1.6,
    /// truncated to the first `m` members (at most 8).
    pub fn default_family(m: usize) -> Result<Self> {
        let family: Vec<SlaterFunction> = Self::DEFAULT_EXPONENTS
            .iter()
            .flat_map(|&exponent| {
                Self::DEFAULT_POWERS
                    .iter()
                    .map(move |&power| SlaterFunction { power, exponent })
            })
            .collect();
        if m > family.len() {
            return Err(KohnError::Domain(format!(
                "the default basis family has {} members, requested {m}",
                family.len()
            )));
        }
        Self::new(family[..m].to_vec())
    }

    pub fn from_lists(powers: &[u32], exponents: &[f64]) -> Result<Self> {
        if powers.len() != exponents.len() {
            return Err(KohnError::Domain(format!(
                "basis.powers has {} entries but basis.exponents has {}",
                powers.len(),
                exponents.len()
            )));
        }
        Self::new(
            powers
                .iter()
                .zip(exponents)
                .map(|(&power, &exponent)| SlaterFunction { power, exponent })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Plain overlaps `∫ χ_i χ_j dr` over `[0, ∞)`, in closed form.
    pub fn overlap(&self) -> Vec<Vec<f64>> {
        let f = &self.functions;
        (0..f.len())
            .map(|i| {
                (0..f.len())
                    .map(|j| {
                        let n = f[i].power + f[j].power;
                        let a = f[i].exponent + f[j].exponent;
                        (1..=n).fold(1.0 / a, |acc, q| acc * q as f64 / a)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.functions.iter().enumerate() {
            if f.power < 1 {
                return Err(KohnError::Domain(format!("basis function {i}: power must be >= 1")));
            }
            if !(f.exponent > 0.0 && f.exponent.is_finite()) {
                return Err(KohnError::Domain(format!(
                    "basis function {i}: exponent must be > 0, got {}",
                    f.exponent
                )));
            }
            for (j, g) in self.functions[..i].iter().enumerate() {
                if g.power == f.power && g.exponent == f.exponent {
                    return Err(KohnError::Domain(format!(
                        "basis functions {j} and {i} are identical (n = {}, alpha = {})",
                        f.power, f.exponent
                    )));
                }
            }
        }
        Ok(())
    }
}

/// All Hamiltonian-residual integrals among `{S, C, chi_1..chi_M}` at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementTable {
    pub k: f64,
    pub k_tilde: f64,
    pub ss: f64,
    pub sc: f64,
    pub cs: f64,
    pub cc: f64,
    /// `<S, chi_i>` (equal to `<chi_i, S>`).
    pub s_chi: Vec<f64>,
    /// `<C, chi_i>` (equal to `<chi_i, C>`).
    pub c_chi: Vec<f64>,
    /// `<chi_i, chi_j>`, row-major, exactly symmetric.
    pub chi_chi: Vec<Vec<f64>>,
    /// `|(sc - cs) - k_tilde|`.
    pub antisymmetry_defect: f64,
    /// Largest relative change seen in the last quadrature doubling.
    pub quadrature_defect: f64,
}

impl ElementTable {
    pub fn m(&self) -> usize {
        self.s_chi.len()
    }

    /// Largest absolute entry, used to turn absolute defects into relative ones.
    pub fn scale(&self) -> f64 {
        let mut s = self.ss.abs().max(self.sc.abs()).max(self.cs.abs()).max(self.cc.abs());
        for v in self.s_chi.iter().chain(&self.c_chi) {
            s = s.max(v.abs());
        }
        for row in &self.chi_chi {
            for v in row {
                s = s.max(v.abs());
            }
        }
        s
    }

    pub fn relative_antisymmetry_defect(&self) -> f64 {
        self.antisymmetry_defect / self.k_tilde.abs()
    }

    /// Build a table directly from integral values (no quadrature).
    /// `chi_chi` must be square and symmetric.
    #[allow(clippy::too_many_arguments)]
    pub fn from_integrals(
        k: f64,
        k_tilde: f64,
        ss: f64,
        sc: f64,
        cs: f64,
        cc: f64,
        s_chi: Vec<f64>,
        c_chi: Vec<f64>,
        chi_chi: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = s_chi.len();
        if c_chi.len() != m || chi_chi.len() != m || chi_chi.iter().any(|r| r.len() != m) {
            return Err(KohnError::Domain("inconsistent element table dimensions".into()));
        }
        for i in 0..m {
            for j in 0..i {
                if chi_chi[i][j] != chi_chi[j][i] {
                    return Err(KohnError::Domain(format!("chi_chi not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            k,
            k_tilde,
            ss,
            sc,
            cs,
            cc,
            s_chi,
            c_chi,
            chi_chi,
            antisymmetry_defect: ((sc - cs) - k_tilde).abs(),
            quadrature_defect: 0.0,
        })
    }

    fn max_relative_change(&self, other: &ElementTable) -> f64 {
        let scale = self.scale().max(other.scale()).max(f64::MIN_POSITIVE);
        let mut d = (self.ss - other.ss)
            .abs()
            .max((self.sc - other.sc).abs())
            .max((self.cs - other.cs).abs())
            .max((self.cc - other.cc).abs());
        for (a, b) in self.s_chi.iter().zip(&other.s_chi) {
            d = d.max((a - b).abs());
        }
        for (a, b) in self.c_chi.iter().zip(&other.c_chi) {
            d = d.max((a - b).abs());
        }
        for (ra, rb) in self.chi_chi.iter().zip(&other.chi_chi) {
            for (a, b) in ra.iter().zip(rb) {
                d = d.max((a - b).abs());
            }
        }
        d / scale
    }
}

/// Evaluate the table with one fixed composite rule of `n_points` abscissae.
pub fn assemble_with_points(problem: &RadialProblem, basis: &BasisSet, n_points: usize) -> ElementTable {
    let rule = CompositeRule::new(problem.r_max, n_points, &problem.potential.breakpoints());
    let m = basis.len();
    let e = problem.energy();

    let mut ss = 0.0;
    let mut sc = 0.0;
    let mut cs = 0.0;
    let mut cc = 0.0;
    let mut s_chi = vec![0.0; m];
    let mut c_chi = vec![0.0; m];
    let mut chi_chi = vec![vec![0.0; m]; m];
    let mut chi = vec![0.0; m];
    let mut dchi = vec![0.0; m];

    for (&r, &w) in rule.points.iter().zip(&rule.weights) {
        let v = problem.potential.value(r);
        let s = problem.s(r);
        let c = problem.c(r);
        let hs = problem.residual_s(r);
        let hc = problem.residual_c(r);
        ss += w * s * hs;
        sc += w * s * hc;
        cs += w * c * hs;
        cc += w * c * hc;
        for (i, f) in basis.functions.iter().enumerate() {
            chi[i] = f.value(r);
            dchi[i] = f.derivative(r);
            s_chi[i] += w * chi[i] * hs;
            c_chi[i] += w * chi[i] * hc;
        }
        // <chi_i, chi_j> after one integration by parts; boundary terms vanish
        // because chi(0) = 0 and chi decays.
        for i in 0..m {
            for j in 0..=i {
                chi_chi[i][j] += w * (0.5 * dchi[i] * dchi[j] + (v - e) * chi[i] * chi[j]);
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            chi_chi[j][i] = chi_chi[i][j];
        }
    }
    let k_tilde = problem.k_tilde();
    ElementTable {
        k: problem.k,
        k_tilde,
        ss,
        sc,
        cs,
        cc,
        s_chi,
        c_chi,
        chi_chi,
        antisymmetry_defect: ((sc - cs) - k_tilde).abs(),
        quadrature_defect: f64::NAN,
    }
}

/// Assemble every integral, doubling the quadrature until two successive
/// tables agree to [`QUADRATURE_TOLERANCE`] relative to the table scale.
pub fn assemble_elements(problem: &RadialProblem, basis: &BasisSet) -> Result<ElementTable> {
    problem.validate()?;
    basis.validate()?;
    let mut n = problem.n_quad;
    let mut coarse = assemble_with_points(problem, basis, n);
    let mut doublings = 0;
    loop {
        n *= 2;
        let fine = assemble_with_points(problem, basis, n);
        let defect = coarse.max_relative_change(&fine);
        if defect <= QUADRATURE_TOLERANCE || fine.scale() == 0.0 {
            return Ok(ElementTable {
                quadrature_defect: defect,
                ..fine
            });
        }
        doublings += 1;
        if doublings >= MAX_DOUBLINGS {
            return Err(KohnError::Assembly { defect, doublings });
        }
        coarse = fine;
    }
}
