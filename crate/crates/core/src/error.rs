use thiserror::Error;

use crate::qubit_algebra::ValidityReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteerError {
    #[error("matrix is not Hermitian (max |M - M^dag| = {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("invalid state: {0}")]
    InvalidState(ValidityReport),

    #[error("Bob's marginal is pure (smallest eigenvalue {min_eigenvalue:.3e}); the whitening map is not invertible")]
    BobMarginalPure { min_eigenvalue: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("target eigenvalues ({alpha:.6}, {beta:.6}) lie above the cap curve; not reproducible{}", direction_suffix(.direction))]
    NotReproducible {
        alpha: f64,
        beta: f64,
        direction: Option<[f64; 3]>,
    },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("malformed input: {0}")]
    Input(String),
}

fn direction_suffix(d: &Option<[f64; 3]>) -> String {
    match d {
        Some([x, y, z]) => format!(" at direction ({x:.6}, {y:.6}, {z:.6})"),
        None => String::new(),
    }
}

pub type Result<T, E = SteerError> = std::result::Result<T, E>;
