//! Time-to-blockage regression.
//!
//! A small fully connected network maps the user's `(x, y, speed)` to the
//! remaining time before it enters the blocked stretch of the lane. Training
//! data is synthesized from the street geometry with the analytic label
//! [`oracle_time`].

mod adam;
mod io;
mod net;
mod train;

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

pub use adam::{Adam, AdamConfig};
pub use io::{
    read_dataset_csv, read_model, write_dataset_csv, write_history_csv, write_model, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use net::{Activation, Normalizer, RegressionNet, Workspace, INPUTS};
pub use train::{train, EpochLoss, TrainConfig, TrainOutcome};

use crate::error::PredictorError;
use crate::scene::{mph_to_mps, Direction, Scene};

/// One labelled training row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    #[serde(rename = "speed_mps")]
    pub speed: f64,
    #[serde(rename = "t_to_blk_s")]
    pub t_to_blk: f64,
}

impl Sample {
    pub fn features(&self) -> [f64; INPUTS] {
        [self.x, self.y, self.speed]
    }
}

/// Seconds until a user at `x` moving in +x at `speed` reaches
/// `blocked_start_x`; zero once it is there or past it.
pub fn oracle_time(x: f64, speed: f64, blocked_start_x: f64) -> Result<f64, PredictorError> {
    if !(speed > 0.0) {
        return Err(PredictorError::InvalidSpeed(speed));
    }
    Ok(((blocked_start_x - x) / speed).max(0.0))
}

/// [`oracle_time`] for either direction of travel.
pub fn oracle_time_directed(
    x: f64,
    speed: f64,
    blocked_edge_x: f64,
    direction: Direction,
) -> Result<f64, PredictorError> {
    match direction {
        Direction::Forward => oracle_time(x, speed, blocked_edge_x),
        Direction::Backward => oracle_time(-x, speed, -blocked_edge_x),
    }
}

/// Speeds 5, 10, ..., 35 mph in m/s.
pub fn default_speed_set() -> Vec<f64> {
    (1..=7).map(|k| mph_to_mps(5.0 * k as f64)).collect()
}

/// Uniform random positions on the street, speeds drawn uniformly from
/// `speed_set`, labelled with the analytic time to `blocked_edge_x`.
pub fn generate_dataset<R: Rng + ?Sized>(
    scene: &Scene,
    blocked_edge_x: f64,
    n: usize,
    speed_set: &[f64],
    rng: &mut R,
) -> Result<Vec<Sample>, PredictorError> {
    if n == 0 {
        return Err(PredictorError::InvalidDataset(
            "sample count must be positive".into(),
        ));
    }
    if speed_set.is_empty() || speed_set.iter().any(|v| !(*v > 0.0)) {
        return Err(PredictorError::InvalidDataset(
            "speed set must be non-empty and positive".into(),
        ));
    }
    let dir = scene.trajectory.direction;
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..=scene.street_length_m);
            let y = rng.random_range(0.0..=scene.street_width_m);
            let speed = *speed_set.choose(rng).expect("non-empty");
            Ok(Sample {
                x,
                y,
                speed,
                t_to_blk: oracle_time_directed(x, speed, blocked_edge_x, dir)?,
            })
        })
        .collect()
}

/// Train, validation and test rows.
pub type Split = (Vec<Sample>, Vec<Sample>, Vec<Sample>);

/// Shuffled train/validation/test partition.
pub fn split(dataset: &[Sample], fractions: [f64; 3], seed: u64) -> Result<Split, PredictorError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(PredictorError::BadFractions(fractions));
    }
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let pick = |r: &[usize]| r.iter().map(|&i| dataset[i]).collect::<Vec<_>>();
    Ok((
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_val]),
        pick(&idx[n_train + n_val..]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub seconds: f64,
    /// An input was outside the training range and got clamped.
    pub clamped: bool,
}

/// Forward pass in seconds.
pub fn predict(
    net: &RegressionNet,
    x: f64,
    y: f64,
    speed: f64,
) -> Result<Prediction, PredictorError> {
    let (seconds, clamped) = net.predict_raw(&[x, y, speed], &mut Workspace::default());
    if !seconds.is_finite() {
        return Err(PredictorError::NonFinite);
    }
    if clamped {
        warn!(
            x,
            y, speed, "predictor input outside training range, clamped"
        );
    }
    Ok(Prediction { seconds, clamped })
}

/// Coefficient of determination of `net` on `test`.
pub fn r_squared(net: &RegressionNet, test: &[Sample]) -> Result<f64, PredictorError> {
    let mut ws = Workspace::default();
    r_squared_with(test, |s| Ok(net.predict_raw(&s.features(), &mut ws).0))
}

/// Coefficient of determination for an arbitrary predictor.
pub fn r_squared_with(
    test: &[Sample],
    mut f: impl FnMut(&Sample) -> Result<f64, PredictorError>,
) -> Result<f64, PredictorError> {
    if test.len() < 2 {
        return Err(PredictorError::UndefinedMetric("need at least two samples"));
    }
    let mean = test.iter().map(|s| s.t_to_blk).sum::<f64>() / test.len() as f64;
    let ss_tot: f64 = test.iter().map(|s| (s.t_to_blk - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(PredictorError::UndefinedMetric("labels have zero variance"));
    }
    let mut ss_res = 0.0;
    for s in test {
        ss_res += (f(s)? - s.t_to_blk).powi(2);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute error against the analytic time on an evenly spaced
/// `nx` x `speeds` grid between the street start and the blocked edge.
pub fn grid_mae(
    p: &dyn BlockagePredictor,
    blocked_edge_x: f64,
    direction: Direction,
    y: f64,
    street_length_m: f64,
    nx: usize,
    speeds: &[f64],
) -> Result<f64, PredictorError> {
    if nx < 2 || speeds.is_empty() {
        return Err(PredictorError::UndefinedMetric(
            "grid needs two positions and one speed",
        ));
    }
    let (from, to) = match direction {
        Direction::Forward => (0.0, blocked_edge_x),
        Direction::Backward => (street_length_m, blocked_edge_x),
    };
    let mut sum = 0.0;
    for i in 0..nx {
        let x = from + (to - from) * i as f64 / (nx - 1) as f64;
        for &v in speeds {
            let truth = oracle_time_directed(x, v, blocked_edge_x, direction)?;
            sum += (p.predict_time(x, y, v)?.seconds - truth).abs();
        }
    }
    Ok(sum / (nx * speeds.len()) as f64)
}

/// Anything that can estimate the time to blockage for the engine.
pub trait BlockagePredictor: Send + Sync {
    fn predict_time(&self, x: f64, y: f64, speed: f64) -> Result<Prediction, PredictorError>;
}

impl BlockagePredictor for RegressionNet {
    fn predict_time(&self, x: f64, y: f64, speed: f64) -> Result<Prediction, PredictorError> {
        predict(self, x, y, speed)
    }
}

/// Exact kinematic time to the blocked edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPredictor {
    pub blocked_edge_x: f64,
    pub direction: Direction,
}

impl BlockagePredictor for AnalyticPredictor {
    fn predict_time(&self, x: f64, _y: f64, speed: f64) -> Result<Prediction, PredictorError> {
        Ok(Prediction {
            seconds: oracle_time_directed(x, speed, self.blocked_edge_x, self.direction)?,
            clamped: false,
        })
    }
}
