//! Error type shared across the crate.
//!
//! The variants mirror the failure classes the command-line tool maps to
//! distinct exit codes: invalid input data, an exhausted sign-determination
//! precision budget, an exhausted search/enumeration budget, and insufficient
//! working depth of a finitely truncated system.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a structural invariant (bad interval, non-partition, …).
    #[error("validation: {0}")]
    Validation(String),

    /// Argument outside the domain of the operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Exact sign determination gave up at the configured precision budget.
    #[error("precision: sign undecided after {bits} bits ({context})")]
    Precision { bits: u32, context: String },

    /// An enumeration or search budget was exceeded; no silent truncation.
    #[error("budget: {0}")]
    Budget(String),

    /// A finitely truncated system is too shallow for the requested accuracy.
    #[error("depth: {0}")]
    Depth(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Exit code the CLI uses for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) => 2,
            Error::Precision { .. } => 3,
            Error::Budget(_) | Error::Depth(_) => 4,
        }
    }
}
