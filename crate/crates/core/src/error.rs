use std::fmt;

use thiserror::Error;

/// Source position and expectation set for a model-file diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invariant `{invariant}` violated with magnitude {magnitude:e}")]
    InvariantViolation { invariant: String, magnitude: f64 },

    #[error("history set is not medium decoherent ({} offending pairs, max |D| = {max:e})", offending.len())]
    NotDecoherent {
        /// `(alpha, beta, |D(alpha, beta)|)` for every off-diagonal entry above tolerance, `alpha < beta`.
        offending: Vec<(usize, usize, f64)>,
        max: f64,
    },

    #[error("{what} count {count} exceeds cap {cap}")]
    CapExceeded { what: &'static str, count: usize, cap: usize },

    #[error("index {index} out of range for slot {slot} of size {size}")]
    IndexOutOfRange { slot: usize, index: usize, size: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    #[error("no unitary supplied for time {time}")]
    MissingUnitary { time: f64 },

    #[error("every branch vector vanishes")]
    AllBranchesZero,

    #[error("factor {factor} is not strongly recorded (defect {defect:e})")]
    FactorNotRecorded { factor: usize, defect: f64 },

    #[error("Simpson quadrature needs an even, positive panel count (got {0})")]
    OddPanelCount(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at {0}")]
    Parse(ParseDiagnostic),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invariant(name: &str, magnitude: f64) -> Self {
        Error::InvariantViolation {
            invariant: name.to_string(),
            magnitude,
        }
    }

    /// Stable machine-readable identifier, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvariantViolation { .. } => "invariant_violation",
            Error::NotDecoherent { .. } => "not_decoherent",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidPartition(_) => "invalid_partition",
            Error::EigenFailure => "eigen_failure",
            Error::MissingUnitary { .. } => "missing_unitary",
            Error::AllBranchesZero => "all_branches_zero",
            Error::FactorNotRecorded { .. } => "factor_not_recorded",
            Error::OddPanelCount(_) => "odd_panel_count",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Parse(_) => "parse_error",
            Error::Io(_) => "io_error",
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) => 2,
            Error::InvariantViolation { .. } | Error::DimensionMismatch { .. } => 3,
            Error::NotDecoherent { .. } | Error::FactorNotRecorded { .. } => 4,
            Error::CapExceeded { .. } => 5,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
