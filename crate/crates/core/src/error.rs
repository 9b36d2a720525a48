use thiserror::Error;

/// Errors produced by the library.
///
/// Variants fall into three groups that the CLI maps onto exit codes:
/// validation failures (bad shapes, non-Hermitian operators, mismatched grids),
/// resource limits, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { what: String, deviation: f64 },

    #[error("noise operator {index} is not traceless (|tr| = {trace:.3e})")]
    NotTraceless { index: usize, trace: f64 },

    #[error("segment {index} has non-positive or non-finite duration {value}")]
    NonPositiveDuration { index: usize, value: f64 },

    #[error("basis elements are not orthonormal (deviation {deviation:.3e} at ({i}, {j}))")]
    NotOrthonormal { i: usize, j: usize, deviation: f64 },

    #[error("basis is incomplete: {0}")]
    Incomplete(String),

    #[error("input matrices are linearly dependent (singular value {0:.3e})")]
    RankDeficient(f64),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("dimension {requested} exceeds the configured maximum {max}")]
    DimensionOverflow { requested: usize, max: usize },

    #[error("memory limit exceeded: {0}")]
    MemoryLimit(String),

    #[error("frequency grid mismatch: {0}")]
    GridMismatch(String),

    #[error("frequency grid is invalid: {0}")]
    InvalidGrid(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("noise operator sets differ: {0}")]
    NoiseMismatch(String),

    #[error("noise source '{0}' has no spectrum")]
    MissingSource(String),

    #[error("spectrum is invalid: {0}")]
    InvalidSpectrum(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("operator is not a projector: {0}")]
    NotProjector(String),

    #[error("basis is not a tensor product of qubit Pauli bases")]
    NonSeparableBasis,

    #[error("position {position} with {width} subsystems does not fit into {available}")]
    PositionOutOfRange { position: usize, width: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse classification used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse(_) => ErrorCategory::Parse,
            Error::Io(_) => ErrorCategory::Parse,
            Error::Numerical(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Numerical,
}

pub type Result<T> = std::result::Result<T, Error>;
