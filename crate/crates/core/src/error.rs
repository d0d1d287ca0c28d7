use thiserror::Error;

/// Errors raised by the solvers and their configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("convexity error: {0}")]
    Convexity(String),

    #[error("implicit solve did not converge after {iterations} iterations (dt*lambda = {dt_lambda})")]
    Contraction { iterations: usize, dt_lambda: f64 },

    #[error("trajectory left the finite range at s = {time}")]
    BlowUp { time: f64 },

    #[error("shooting failure: {0}")]
    Shooting(String),

    #[error("Picard iteration did not converge in {iterations} iterations (last change {change:e})")]
    Convergence { iterations: usize, change: f64 },

    #[error("bracket expansion failed: {0}")]
    Unbounded(String),

    #[error("inconsistent classification: {0}")]
    Inconsistency(String),

    #[error("scheme error: {0}")]
    Scheme(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's configuration or inputs rather
    /// than by a solver.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Input(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
