use thiserror::Error;

use crate::scene::SbsId;

/// Errors raised while building or querying a [`Scene`](crate::scene::Scene).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown SBS {0}")]
    UnknownSbs(SbsId),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("invalid time interval {0} s: must be positive")]
    InvalidInterval(f64),
    #[error("cannot associate a {detection} detection with a {track} track")]
    ClassMismatch { track: String, detection: String },
    #[error("detection at {now} s is not newer than the track update at {last} s")]
    StaleDetection { now: f64, last: f64 },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
}

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("bad split fractions {0:?}: must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model produced a non-finite output")]
    NonFinite,
    #[error("R-squared undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("no RSS model for SBS {0}")]
    UnknownSbs(SbsId),
    #[error("cannot normalize an empty trace")]
    EmptyTrace,
    #[error("invalid channel model: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhoError {
    #[error("no handover target: {0}")]
    NoTarget(String),
    #[error("illegal transition {input} in state {state}")]
    IllegalTransition { state: String, input: String },
    #[error("time went backwards: {now} s after {last} s")]
    NonMonotonicTime { now: f64, last: f64 },
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

impl ConfigError {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Failures surfaced by a simulation run.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Pho(#[from] PhoError),
    #[error("sweep: {0}")]
    Sweep(String),
}
