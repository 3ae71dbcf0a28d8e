use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid point {x} lies outside [0, {upper}]")]
    Domain { x: f64, upper: f64 },

    #[error("wall crash at t = {t}: box length {length} is not positive")]
    WallCrash { t: f64, length: f64 },

    #[error("integrator instability at t = {t}: {quantity} drifted by {drift:e} in one step")]
    IntegratorInstability {
        t: f64,
        quantity: &'static str,
        drift: f64,
    },

    #[error("density matrix lost positivity: eigenvalue {eigenvalue:e}")]
    Positivity { eigenvalue: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("replay record too coarse: interpolation error estimate {estimate:e} exceeds {tolerance:e}")]
    ReplayResolution { estimate: f64, tolerance: f64 },

    #[error("malformed record at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    /// Short category label, used for process exit codes and log lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidConfiguration(_) | Error::DimensionMismatch { .. } => "configuration",
            Error::InvalidState(_) | Error::Domain { .. } | Error::Validation(_) => "validation",
            Error::Positivity { .. } => "validation",
            Error::Parse { .. } => "parse",
            Error::WallCrash { .. }
            | Error::IntegratorInstability { .. }
            | Error::ReplayResolution { .. } => "integration",
        }
    }
}
