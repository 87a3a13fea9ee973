use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("matrix is rank deficient (eigenvalue ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("signal is zero")]
    ZeroSignal,
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("degenerate operator: sigma_min(A^T) = 0")]
    Degenerate,
    #[error("subspace is not orthogonal to the cone's bad set (overlap {overlap:e})")]
    SubspaceNotOrthogonal { overlap: f64 },
    #[error("measurements are inconsistent: affine residual {residual:e}")]
    InfeasibleData { residual: f64 },
    #[error("support search budget exceeded: {count} supports")]
    BudgetExceeded { count: u128 },
    #[error("no support of size <= {k_max} fits the measurements")]
    NoFit { k_max: usize },
    #[error("invalid signal spec: {0}")]
    SpecInvalid(String),
    #[error("insufficient coverage for d = {d}: level {level} not bracketed")]
    InsufficientCoverage { d: usize, level: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
