use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("root not bracketed in [2^{lo_exp}, 2^{hi_exp}] for target {target}")]
    Bracket { lo_exp: i32, hi_exp: i32, target: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("field has nonzero mean ({0:e})")]
    NonzeroMean(f64),
    #[error("aliasing: relative energy {0:e} above the guard band")]
    Aliasing(f64),
    #[error("wrong regime: {0}")]
    Regime(String),
    #[error("vacuum: min(1+q) = {0} below threshold")]
    Vacuum(f64),
    #[error("instability: norm grew by {0:.3e} in one step")]
    Unstable(f64),
    #[error("resolution too coarse: {0}")]
    Resolution(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
