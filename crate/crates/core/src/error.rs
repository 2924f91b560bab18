use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("singular matrix: zero pivot in column {column}")]
    SingularPivot { column: usize },

    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("time stepping aborted at t = {time}: {reason}")]
    Stepping { time: f64, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("barrier mismatch, missing times: {0:?}")]
    BarrierMismatch(Vec<f64>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
