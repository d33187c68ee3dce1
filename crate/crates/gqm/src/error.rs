//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, GqmError>;

#[derive(Debug, Error)]
pub enum GqmError {
    /// A precondition on an argument was violated (wrong dimension, negative
    /// photon number, sign vector with entries other than +/-1, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The computation cannot proceed for numerical reasons: ill-conditioned
    /// covariance, failed factorization, non-smooth pure-state direction.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A covariance matrix fails the physicality bound (some symplectic
    /// eigenvalue below 1).
    #[error("non-physical covariance: min symplectic eigenvalue {min_nu:.6e} < 1 - {tol:.1e}")]
    NonPhysical { min_nu: f64, tol: f64 },

    /// The Fisher information matrix is singular; carries an orthonormal set
    /// of zero-information directions in parameter space.
    #[error("singular information matrix: {} null direction(s)", null_directions.len())]
    SingularInformation { null_directions: Vec<Vec<f64>> },

    /// Truncated Fock-space computation lost too much trace; rerun with a
    /// larger cutoff.
    #[error(
        "truncation leakage {leakage:.3e} exceeds {bound:.1e} at cutoff {cutoff}; increase the cutoff"
    )]
    IncreaseCutoff {
        leakage: f64,
        bound: f64,
        cutoff: usize,
    },

    /// Malformed text record passed to a deserializer.
    #[error("malformed record: {0}")]
    MalformedRecord(String),
}
