use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("refused: {what} needs {required} units of work, cap is {cap}")]
    ComplexityRefused { what: &'static str, required: u128, cap: u128 },
    #[error("invalid deltas: need 0 < delta1 < delta2 < {bound}, got delta1={delta1}, delta2={delta2}")]
    InvalidDeltas { delta1: f64, delta2: f64, bound: f64 },
    #[error("invalid set-cover instance: {0}")]
    InvalidInstance(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("solver stalled after {iterations} iterations ({context})")]
    SolverStall { iterations: usize, context: &'static str },
    #[error("region problem is infeasible: {0}")]
    Infeasible(String),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("IDX payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported IDX element type {0:#04x}")]
    UnsupportedElementType(u8),
    #[error("only {found} examples match the requested classes, {requested} requested")]
    NotEnoughExamples { found: usize, requested: usize },
    #[error("labels must be 0 or 1")]
    LabelsNotBinary,
    #[error("gradient descent diverged at step {step} (loss {loss})")]
    DivergenceDetected { step: usize, loss: f64 },
    #[error("dataset is not in general position: {0}")]
    NotGeneralPosition(String),
    #[error("two examples share coordinate value {value} across a chunk boundary")]
    BoundaryTie { value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::ComplexityRefused { .. } => "ComplexityRefused",
            Error::InvalidDeltas { .. } => "InvalidDeltas",
            Error::InvalidInstance(_) => "InvalidInstance",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::SolverStall { .. } => "SolverStall",
            Error::Infeasible(_) => "Infeasible",
            Error::Unbounded => "Unbounded",
            Error::BadMagic(_) => "BadMagic",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::UnsupportedElementType(_) => "UnsupportedElementType",
            Error::NotEnoughExamples { .. } => "NotEnoughExamples",
            Error::LabelsNotBinary => "LabelsNotBinary",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::NotGeneralPosition(_) => "NotGeneralPosition",
            Error::BoundaryTie { .. } => "BoundaryTie",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
