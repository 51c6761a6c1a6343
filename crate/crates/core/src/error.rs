use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("density invariant violated: {0}")]
    Density(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular linear operator: {0}")]
    SingularOperator(String),
    #[error("negative mass {value:e} at slice {slice}, node {node}")]
    NegativeMass { slice: usize, node: usize, value: f64 },
    #[error("inadmissible direction: continuity defect {defect:e} exceeds {tol:e}")]
    InadmissibleDirection { defect: f64, tol: f64 },
    #[error("time {0} is not aligned with the time grid")]
    OffGrid(f64),
    #[error("operator too large: {unknowns} unknowns exceeds {limit}")]
    TooLarge { unknowns: usize, limit: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("field file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for MfgError {
    fn from(e: std::io::Error) -> Self {
        MfgError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MfgError>;
