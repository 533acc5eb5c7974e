//! Vision-aided proactive handover for mmWave small cells.
//!
//! Cameras on the small base stations see an obstacle and the users heading
//! toward its radio shadow; a regression model predicts when a user will
//! enter the shadow and the handover is timed to complete just before it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod perception;
pub mod pho;
pub mod predictor;
pub mod scene;
pub mod time;

pub use config::{Scenario, ScenarioConfig, StrategyKind};
pub use engine::{run, RunResult, Summary};
pub use error::{
    ChannelError, ConfigError, EngineError, PerceptionError, PhoError, PredictorError, SceneError,
};
pub use scene::{Direction, SbsId, Scene, ShadowInterval};
pub use time::SimTime;
