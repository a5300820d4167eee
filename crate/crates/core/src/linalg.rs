//! Dense linear algebra helpers over real and complex scalars.
//!
//! Everything goes through nalgebra's partially pivoted LU factorization, so
//! determinant signs come from the pivot parity rather than from a logarithm.

use nalgebra::{ComplexField, DMatrix, DVector};

/// Determinant by pivoted LU.
pub fn det<T: ComplexField>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 {
        return T::one();
    }
    a.clone().lu().determinant()
}

/// Solve `a x = rhs`; `None` when the factorization hits an exact zero pivot.
pub fn solve<T: ComplexField>(a: &DMatrix<T>, rhs: &DVector<T>) -> Option<DVector<T>> {
    a.clone().lu().solve(rhs)
}

/// `a` with the listed rows and columns removed.
pub fn without<T: ComplexField>(a: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    let keep_r: Vec<usize> = (0..a.nrows()).filter(|i| !rows.contains(i)).collect();
    let keep_c: Vec<usize> = (0..a.ncols()).filter(|j| !cols.contains(j)).collect();
    DMatrix::from_fn(keep_r.len(), keep_c.len(), |i, j| a[(keep_r[i], keep_c[j])].clone())
}

pub fn frobenius_norm<T: ComplexField>(a: &DMatrix<T>) -> f64
where
    T::RealField: Into<f64>,
{
    let mut s = 0.0;
    for v in a.iter() {
        let m: f64 = v.clone().modulus().into();
        s += m * m;
    }
    s.sqrt()
}

fn one_norm<T: ComplexField>(a: &DMatrix<T>) -> f64
where
    T::RealField: Into<f64>,
{
    let mut best: f64 = 0.0;
    for col in a.column_iter() {
        let s: f64 = col.iter().map(|v| v.clone().modulus().into()).sum();
        best = best.max(s);
    }
    best
}

/// `‖a‖₁ ‖a⁻¹‖₁`, or infinity when `a` is not invertible.
pub fn condition_estimate<T: ComplexField>(a: &DMatrix<T>) -> f64
where
    T::RealField: Into<f64>,
{
    match a.clone().try_inverse() {
        Some(inv) => one_norm(a) * one_norm(&inv),
        None => f64::INFINITY,
    }
}

/// True when the determinant is exactly zero or the 1-norm condition number
/// exceeds `limit`.
pub fn numerically_singular(det_abs: f64, condition: f64, limit: f64) -> bool {
    det_abs == 0.0 || !det_abs.is_finite() || !(condition <= limit)
}
