use thiserror::Error;

/// Errors produced anywhere in the simulation and tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("delay {tau:e} s outside the detectable window [{min:e}, {max:e}] s")]
    DelayOutOfWindow { tau: f64, min: f64, max: f64 },

    #[error("operation requires the {expected} scheme")]
    WrongScheme { expected: &'static str },

    #[error("target position coincides with the station; bearing undefined")]
    UndefinedBearing,

    #[error("weight update degenerate: all posterior weights are zero")]
    DegenerateUpdate,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dual solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
