use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid resolution must be at least 1")]
    EmptyGrid,
    #[error("path has {got} values, grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("path value at index {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("grid mismatch: resolution {left} vs {right}")]
    GridMismatch { left: usize, right: usize },
    #[error("window width must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("invalid interval [{start}, {end})")]
    InvalidInterval { start: f64, end: f64 },
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("requested {requested} terms, hard cap is {cap}")]
    TooManyTerms { requested: usize, cap: usize },
    #[error("predictability violated: coefficient {term} depends on innovation {driver}")]
    PredictabilityViolation { term: usize, driver: usize },
    #[error("wiring mismatch: {0}")]
    WiringMismatch(&'static str),
    #[error("truncation failed: remainder estimate {bound} after {terms} terms")]
    TruncationFailure {
        terms: usize,
        bound: f64,
        partial: Box<crate::series::SeriesDraw>,
    },
    #[error("tail-constant series diverges: E|Y|^alpha = {0} >= 1")]
    DivergentTailConstant(f64),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, constraint: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            constraint,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
