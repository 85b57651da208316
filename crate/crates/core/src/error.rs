use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and a grid) disagree on shape.
    #[error("dimension mismatch: expected {expected:?} (channels, bins), found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid feasible set: {0}")]
    InvalidSet(String),

    /// The operator returned non-finite values at the listed flat indices.
    #[error("operator evaluation produced non-finite values at indices {indices:?}")]
    OperatorEvaluation { indices: Vec<usize> },

    /// Input lies outside the domain an operator or loader accepts.
    #[error("input outside operator domain: {0}")]
    Domain(String),

    #[error("invalid step rule: {0}")]
    InvalidStep(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown builtin problem `{0}`")]
    UnknownProblem(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    /// Malformed network input file.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
