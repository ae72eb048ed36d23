use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is rank deficient at column {column} (consider --damping 1e-6)")]
    RankDeficient { column: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("SVD did not converge within {iterations} iterations")]
    SvdNoConvergence { iterations: usize },
    #[error("residual is identically zero")]
    ZeroResidual,
    #[error("triangular matrix has a zero diagonal entry at {index}")]
    SingularTriangular { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("compression budget too small: {0}")]
    BudgetTooSmall(String),
    #[error("rank {rank} outside the valid range 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("corrupt codes: column {column} holds {count} nonzeros but the budget is {budget}")]
    CorruptCodes { column: usize, count: usize, budget: usize },
    #[error("corrupt payload at byte offset {offset}: {reason}")]
    CorruptPayload { offset: usize, reason: String },
    #[error("not a cospadi container (bad magic)")]
    NotACospadiFile,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(String),

    #[error("group shape error: {0}")]
    GroupShape(String),
    #[error("tensor file error ({tensor}): {reason}")]
    Ingest { tensor: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error stems from user configuration rather than input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::BudgetTooSmall(_)
                | Error::InvalidRank { .. }
                | Error::GroupShape(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
