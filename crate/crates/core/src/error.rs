use thiserror::Error;

/// Errors raised across the library.
///
/// The variants map onto the CLI exit-code contract: [`Error::Config`] and
/// [`Error::Usage`] are caller mistakes (exit 2), everything else is a data or
/// runtime failure (exit 1).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("moment generating function estimate did not stabilise: {0}")]
    NonfiniteMgf(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than data or runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Usage(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
