use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("axis index {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("validation failed [{code}]: {detail}")]
    Validation { code: &'static str, detail: String },
    #[error("linearized solve not contractive: q = {q} >= 1")]
    NotContractive { q: f64 },
    #[error("term budget exhausted: tail bound {tail} > tol {tol} after {terms} terms")]
    BudgetExceeded { terms: usize, tail: f64, tol: f64 },
    #[error("initial control too large: ||u0||_Bs = {norm} >= x0 = {x0}")]
    InitialControlTooLarge { norm: f64, x0: f64 },
    #[error("discount too small: gamma = {gamma} < gamma* = {threshold}")]
    GammaTooSmall { gamma: f64, threshold: f64 },
    #[error("cannot sample from the zero function")]
    ZeroFunction,
    #[error("unsupported Sobolev order k = {0} (only k <= 2)")]
    UnsupportedOrder(usize),
    #[error("{failed} of {total} SDE paths diverged (> 1% allowed)")]
    PathFailures { failed: usize, total: usize },
    #[error("malformed spectral function: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotContractive { .. } => 3,
            Error::Validation { .. }
            | Error::DimensionMismatch { .. }
            | Error::AxisOutOfRange { .. }
            | Error::NonPositiveGamma(_)
            | Error::GammaTooSmall { .. }
            | Error::InitialControlTooLarge { .. }
            | Error::Malformed(_) => 4,
            Error::Io(_) | Error::Json(_) => 5,
            _ => 1,
        }
    }
}
