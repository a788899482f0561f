//! Error type shared by every module of the crate.

/// Crate-wide error enum.
///
/// Variants are grouped by the subsystem that raises them; the CLI maps
/// them onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // gossip
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("random graph stayed disconnected after {attempts} sampling attempts")]
    DisconnectedGraph { attempts: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    // problems
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("dataset contains a single class only")]
    SingleClassDataset,
    #[error("insufficient samples: need {need}, have {have}")]
    InsufficientSamples { need: usize, have: usize },
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("empty file: {0}")]
    EmptyFile(String),

    // solvers
    #[error("solver state not initialized for this operation")]
    NotInitialized,
    #[error("non-finite iterate at iteration {0}; step size is likely too large")]
    NonFiniteIterate(usize),
    #[error("constrained problems are not supported by this solver")]
    ConstrainedNotSupported,
    #[error("missing constant: {0}")]
    MissingConstant(String),

    // metrics
    #[error("missing reference solution")]
    MissingReference,
}

pub type Result<T> = std::result::Result<T, Error>;
