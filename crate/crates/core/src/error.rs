use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown family: {0}")]
    UnknownFamily(String),
    #[error("quadrature did not converge: achieved error {achieved:e}, budget {budget:e} ({context})")]
    Quadrature { achieved: f64, budget: f64, context: String },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("tail mass beyond R = {radius} is {mass:e}, above tolerance {tol:e}")]
    TailMass { radius: f64, mass: f64, tol: f64 },
    #[error("exterior policy cannot resolve point {0:?}")]
    Exterior(Vec<f64>),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UnknownFamily(_) => "unknown_family",
            Error::Quadrature { .. } => "quadrature",
            Error::InvalidMeasure(_) => "invalid_measure",
            Error::TailMass { .. } => "tail_mass",
            Error::Exterior(_) => "exterior",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::NotConverged { .. } => "not_converged",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Internal(_) => "internal",
        }
    }
}
