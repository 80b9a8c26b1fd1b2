use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("evaluation error at node {node}: {msg}")]
    Evaluation { node: usize, msg: String },
    #[error("numerical blowup at step {step}")]
    NumericalBlowup { step: usize },
    #[error("schedule validation failed at t = {t}: {msg}")]
    Validation { t: f64, msg: String },
    #[error("integrator unstable: {0}")]
    Stability(String),
    #[error("eigensolver did not converge; residuals {residuals:?}")]
    Convergence { residuals: Vec<f64> },
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
