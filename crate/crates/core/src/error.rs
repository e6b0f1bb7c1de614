use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual_norm:.3e})")]
    Convergence {
        iterations: usize,
        residual_norm: f64,
    },

    #[error("singular linearization at newton iteration {iteration}")]
    Singular { iteration: usize },

    #[error("step {step} to t = {t} s failed: {source}")]
    StepFailed {
        step: usize,
        t: f64,
        #[source]
        source: Box<SimError>,
    },

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        SimError::Dimension {
            what,
            expected,
            got,
        }
    }
}
