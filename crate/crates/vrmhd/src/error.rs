//! Error taxonomy shared by every module.
//!
//! The variants map onto the process exit codes used by the binary:
//! configuration problems exit with 2, solver failures with 3 and runtime
//! invariant violations with 4.

use thiserror::Error;

/// All failure modes of the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sizes, inconsistent geometry, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Evaluation requested outside the computational domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A field was passed to an operation expecting a different space.
    #[error("space mismatch: expected {expected}, got {got}")]
    SpaceMismatch {
        /// Space tag required by the operation.
        expected: &'static str,
        /// Space tag actually supplied.
        got: &'static str,
    },

    /// Nonpositive density or temperature encountered.
    #[error("thermodynamic state error: {0}")]
    ThermodynamicState(String),

    /// Linear or nonlinear solver did not converge.
    #[error("solver failure in {context}: {detail}")]
    Solver {
        /// Which solve failed (propagator or operator name).
        context: String,
        /// Residuals, iteration counts.
        detail: String,
    },

    /// A conservation or divergence invariant was violated at runtime.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Snapshot or output file problems.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Snapshot header or payload malformed or inconsistent.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::SpaceMismatch { .. } => 2,
            Error::Solver { .. } | Error::ThermodynamicState(_) => 3,
            Error::Invariant(_) => 4,
            Error::Io(_) | Error::Format(_) => 2,
        }
    }
}
