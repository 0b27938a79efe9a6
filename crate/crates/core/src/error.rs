use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A user-supplied parameter lies outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Internally inconsistent configuration (e.g. a window narrower than the
    /// kernel stencil).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Height truncation could not be certified within the state budget.
    /// `partial_log_value` is the last value computed on the largest window.
    #[error(
        "truncation error: relative boundary mass {defect:.3e} on window h_max={h_max} \
         (partial log value {partial_log_value})"
    )]
    Truncation {
        partial_log_value: f64,
        defect: f64,
        h_max: usize,
    },

    /// An exact method declined to run because the instance exceeds its cap.
    #[error("refused: {0}")]
    Refused(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
