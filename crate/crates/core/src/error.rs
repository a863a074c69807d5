use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Input,
    /// A numerical routine could not produce a trustworthy answer.
    Numerical,
    /// Invalid parameters or configuration.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("only {available} observations carry kernel weight near x0={x0} (need {required})")]
    InsufficientLocalData {
        x0: f64,
        available: usize,
        required: usize,
    },

    #[error("local design at x0={x0} is singular (condition number {condition:e})")]
    SingularLocalDesign { x0: f64, condition: f64 },

    #[error("every candidate failed during cross-validation: {0}")]
    AllCandidatesFailed(String),

    #[error("{0} is outside the domain [0, 1]")]
    DomainError(f64),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("curve {index} is not sampled on the quadrature grid")]
    GridMismatch { index: usize },

    #[error("right block is asymmetric at ({row}, {col}): difference {difference:e}")]
    AsymmetryError {
        row: usize,
        col: usize,
        difference: f64,
    },

    #[error("diagonal entry {index} of the Gram matrix is {value:e}, too small to update")]
    ZeroDiagonal { index: usize, value: f64 },

    #[error("system is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("observations {index} and {} share the same time", index + 1)]
    ZeroTimeGap { index: usize },

    #[error("state became non-finite at Euler step {step}")]
    NonFinite { step: usize },

    #[error("support set is empty")]
    EmptySupport,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("times are not strictly increasing at line {line}")]
    NonMonotoneTimes { line: usize },

    #[error("duplicate column name {0:?}")]
    DuplicateColumnName(String),

    #[error("unknown gene name {0:?}")]
    UnknownGeneName(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping [`Error::Context`] layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self.root() {
            Error::InsufficientLocalData { .. }
            | Error::SingularLocalDesign { .. }
            | Error::AllCandidatesFailed(_)
            | Error::ZeroDiagonal { .. }
            | Error::IllConditioned { .. }
            | Error::NonFinite { .. } => ErrorClass::Numerical,
            Error::InvalidConfig(_) | Error::Json(_) => ErrorClass::Config,
            _ => ErrorClass::Input,
        }
    }
}
