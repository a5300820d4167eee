use thiserror::Error;

/// Errors raised by the Kohn workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KohnError {
    #[error("invalid input: {0}")]
    Domain(String),

    #[error("quadrature did not converge: relative defect {defect:.3e} after {doublings} doublings")]
    Assembly { defect: f64, doublings: u32 },

    /// The Kohn matrix is singular or numerically singular at this `tau`.
    #[error("singular Kohn system at tau = {tau:.12}: det(A) = {det:.6e}, condition estimate {condition:.3e}")]
    SingularSystem { tau: f64, det: f64, condition: f64 },

    #[error("singular complex Kohn system at tau = {tau:.12}: |det(A')| = {det_abs:.6e}")]
    SingularComplexSystem { tau: f64, det_abs: f64 },

    /// `det(A; tau) = 0`, so the phase shift is undefined at this `tau`.
    #[error("phase shift undefined at tau = {tau:.12}: {what} vanishes")]
    Singularity { tau: f64, what: &'static str },

    #[error("could not extract determinant coefficients: {0}")]
    Extraction(String),

    #[error("degenerate case: {0}")]
    Degenerate(String),

    #[error("oracle configuration error: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, KohnError>;
