use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("goal coincides with position (distance {distance:.3e} m), desired direction undefined")]
    DegenerateGoal { distance: f64 },

    #[error("position coincides with wall closest point (distance {distance:.3e} m), normal undefined")]
    CoincidentPoint { distance: f64 },

    #[error("simulation failed at step {step}: {source}")]
    SimulationStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stationary window: last displacement {displacement:.3e} m, direction undefined")]
    StationaryWindow { displacement: f64 },

    #[error("repulsive exponent overflow in sample {sample}: d_w / w_B = {exponent}")]
    ExponentOverflow { sample: String, exponent: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in weight `{name}`")]
    NonFiniteGradient { name: &'static str },

    #[error("training diverged at epoch {epoch}: train MSE {mse:.6e} exceeds 10x initial {initial:.6e}")]
    Diverged { epoch: usize, mse: f64, initial: f64 },

    #[error("rollout failed at step {step}: {source}")]
    RolloutStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGoal { .. }
                | Error::CoincidentPoint { .. }
                | Error::SimulationStep { .. }
                | Error::StationaryWindow { .. }
                | Error::ExponentOverflow { .. }
                | Error::NonFiniteGradient { .. }
                | Error::Diverged { .. }
                | Error::RolloutStep { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
