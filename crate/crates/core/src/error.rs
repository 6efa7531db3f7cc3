use thiserror::Error;

/// Errors raised by the inference toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("series too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "non-finite value in signature kernel solve; rescale the inputs \
         (e.g. with a range-normalisation transform) before evaluating"
    )]
    NonFiniteKernel,
    #[error("negative squared distance {0:e} exceeds solver tolerance")]
    NegativeDistance(f64),
    #[error("linear solve failed: {0}")]
    Singular(String),
    #[error("all {0} losses were non-finite")]
    AllLossesNonFinite(usize),
    #[error("serialisation: {0}")]
    Serde(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!("checked io kind"),
            }
        } else {
            Error::Serde(e.to_string())
        }
    }
}
