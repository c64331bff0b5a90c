use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("n_complex unsupported: {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid current: {0}")]
    InvalidCurrent(String),
    #[error("mollification scale {epsilon} below 4h = {min}")]
    UnresolvedKernel { epsilon: f64, min: f64 },
    #[error("insufficient padding: {0}")]
    InsufficientPadding(String),
    #[error("divergent weight: {0}")]
    DivergentWeight(String),
    #[error("data not dbar-closed: closedness residual {residual:.3e} exceeds {limit:.3e}")]
    NotClosed { residual: f64, limit: f64 },
    #[error("growth analysis failed: {0}")]
    Growth(String),
    #[error("resolution too coarse: {0}")]
    TooCoarse(String),
    #[error("extension check failed: {0}")]
    Extension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
