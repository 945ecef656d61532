use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("ellipticity fails at x = {x:?}, xi = {xi:?}: |a| = {value:.3e} < {required:.3e}")]
    Ellipticity {
        x: Vec<f64>,
        xi: Vec<i64>,
        value: f64,
        required: f64,
    },
    #[error("invalid phase: {0}")]
    Phase(String),
    #[error("decay fit undefined: {0}")]
    UndefinedFit(String),
    #[error("no convergence after {iterations} iterations (last estimate {last})")]
    IterationLimit { iterations: usize, last: f64 },
    #[error("accuracy target not reached: {0}")]
    Accuracy(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
