use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, found {found})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("empty Pauli word")]
    EmptyPauliWord,

    #[error("invalid Pauli letter {0:?}; expected one of I, X, Y, Z")]
    InvalidPauliLetter(char),

    #[error("truncated boson mode needs at least 2 levels, got {0}")]
    TruncationTooSmall(usize),

    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("{0} is not Hermitian (deviation {1:.3e})")]
    NotHermitian(String, f64),

    #[error("Lie chain must not be empty")]
    EmptyChain,

    #[error("Lie chain of length {0} exceeds the oracle limit of 4")]
    ChainTooLong(usize),

    #[error("unknown control index {index}; the model has {count} controls")]
    UnknownControl { index: usize, count: usize },

    #[error("state norm {0:.3e} differs from 1")]
    NotNormalized(f64),

    #[error("norm defect {defect:.3e} at t = {time:.4} exceeds bound; reduce the step")]
    NormDefect { time: f64, defect: f64 },

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("feedback law references output {index}, but only {count} are declared")]
    UndefinedOutput { index: usize, count: usize },

    #[error("control law provides {found} controls, model has {expected}")]
    ControlCount { expected: usize, found: usize },

    #[error("interaction is not given as a sum of system-environment products")]
    MissingDecomposition,

    #[error("at least one initial state is required")]
    NoInitialStates,

    #[error("trace output failed: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
