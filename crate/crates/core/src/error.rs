use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be non-negative, got {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("gear {gear} out of range 1..={n_gears}")]
    InvalidGear { gear: usize, n_gears: usize },

    #[error("motor speed {n_m:.1} rpm exceeds limit {n_max:.1} rpm")]
    Overspeed { n_m: f64, n_max: f64 },

    #[error("motor torque {t_m:.2} N·m exceeds limit {t_max:.2} N·m")]
    TorqueLimit { t_m: f64, t_max: f64 },

    #[error("power polynomial fit failed: {0}")]
    Fit(String),

    #[error("motor power polynomial has not been fitted")]
    NotFitted,

    #[error("line {line}: {msg}")]
    CycleParse { line: usize, msg: String },

    #[error("invalid driving cycle: {0}")]
    Cycle(String),

    #[error("horizon of {horizon} steps needs at least {needed} cycle samples, have {len}")]
    HorizonTooLong {
        horizon: usize,
        needed: usize,
        len: usize,
    },

    #[error("plan row {row} violates SOS1: {msg}")]
    Sos1 { row: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("every gear sequence is infeasible for this scenario")]
    InfeasibleScenario,

    #[error("simulation aborted at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
