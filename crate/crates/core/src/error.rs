use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("inflation factor must be at least 1, got {0}")]
    LambdaTooSmall(f64),

    #[error("the sampling region contains no lattice sites (lambda = {0})")]
    EmptyRegion(f64),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("FFT grid too small along axis {axis}: {size} < required {required}")]
    InsufficientPadding {
        axis: usize,
        size: usize,
        required: usize,
    },

    #[error("coefficients are not absolutely summable (beta = {beta} <= d = {dim})")]
    NotSummable { beta: f64, dim: usize },

    #[error("rescaled profile undefined: gamma({0}) = 0")]
    ZeroGamma(f64),

    #[error("model cannot be classified: {0}")]
    Unclassified(String),

    #[error("wrong dependence regime: expected {expected}, model is {actual}")]
    WrongRegime { expected: String, actual: String },

    #[error(
        "total sum is indistinguishable from zero (|A| = {value:e} <= tail bound {tail_bound:e})"
    )]
    ZeroTotalSum { value: f64, tail_bound: f64 },

    #[error("limit function is not square integrable: {0}")]
    NotSquareIntegrable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
