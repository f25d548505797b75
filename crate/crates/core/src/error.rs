use thiserror::Error;

/// Errors raised by the laboratory. The variants are grouped so that a
/// front end can map them onto exit statuses (see [`Error::class`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("ping-pong violation: {0}")]
    PingPongViolation(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("reduction did not terminate after {0} steps (group likely not discrete)")]
    NonTermination(usize),
    #[error("no atoms beyond radius {0}")]
    EmptyTail(f64),
    #[error("integrator step failure: {0}")]
    StepFailure(String),
    #[error("curvature certificate missing: {0}")]
    CurvatureCertificateMissing(String),
    #[error("shooting diverged: {0}")]
    ShootingDivergence(String),
    #[error("orbit cache version mismatch: found {0:?}")]
    VersionMismatch(String),
    #[error("orbit cache checksum mismatch: {0}")]
    ChecksumMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Budget,
    Solver,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::Invalid(_)
            | Error::PingPongViolation(_)
            | Error::VersionMismatch(_)
            | Error::ChecksumMismatch(_)
            | Error::Parse(_)
            | Error::CurvatureCertificateMissing(_) => ErrorClass::Validation,
            Error::BudgetExceeded(_) | Error::InsufficientData(_) | Error::EmptyTail(_) => ErrorClass::Budget,
            Error::NonTermination(_) | Error::StepFailure(_) | Error::ShootingDivergence(_) => {
                ErrorClass::Solver
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "Domain",
            Error::Invalid(_) => "Invalid",
            Error::PingPongViolation(_) => "PingPongViolation",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NonTermination(_) => "NonTermination",
            Error::EmptyTail(_) => "EmptyTail",
            Error::StepFailure(_) => "StepFailure",
            Error::CurvatureCertificateMissing(_) => "CurvatureCertificateMissing",
            Error::ShootingDivergence(_) => "ShootingDivergence",
            Error::VersionMismatch(_) => "VersionMismatch",
            Error::ChecksumMismatch(_) => "ChecksumMismatch",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
