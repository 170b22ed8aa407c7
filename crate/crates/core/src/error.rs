use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {value} of point {point} lies outside {domain}")]
    CoordinateOutOfDomain {
        point: usize,
        value: f64,
        domain: &'static str,
    },

    #[error("design must contain at least one point")]
    EmptyDesign,

    #[error("replication counts must be positive integers")]
    InvalidCount,

    #[error("unsupported target distribution: {0}")]
    UnsupportedTarget(String),

    #[error("information matrix is singular; null direction {null_direction:?}")]
    SingularInformation { null_direction: Vec<f64> },

    #[error("candidate set does not support a nonsingular information matrix")]
    InfeasibleCandidates,

    #[error("requested size {requested} exceeds cap {cap}; {hint}")]
    CapExceeded {
        requested: usize,
        cap: usize,
        hint: &'static str,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
