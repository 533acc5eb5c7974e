use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::adam::{Adam, AdamConfig};
use super::net::{Activation, Normalizer, RegressionNet, Workspace, INPUTS};
use super::Sample;
use crate::error::PredictorError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 20,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            adam: AdamConfig::default(),
            seed: 7,
        }
    }
}

/// Mean squared errors of one epoch, in seconds squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation MSE (the last epoch
    /// when there is no validation set).
    pub net: RegressionNet,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

fn normalized(rows: &[Sample], n: &Normalizer) -> Vec<([f64; INPUTS], f64)> {
    rows.iter()
        .map(|s| (n.inputs(&s.features()).0, n.label(s.t_to_blk)))
        .collect()
}

/// Mini-batch Adam on mean squared error. Fully determined by `cfg.seed`.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, PredictorError> {
    if train_set.is_empty() {
        return Err(PredictorError::InvalidDataset("empty training set".into()));
    }
    if cfg.epochs == 0 {
        return Err(PredictorError::InvalidConfig(
            "epochs must be at least 1".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.batch_size > train_set.len() {
        return Err(PredictorError::InvalidConfig(format!(
            "batch size {} must be in 1..={}",
            cfg.batch_size,
            train_set.len()
        )));
    }
    if cfg.hidden.contains(&0) {
        return Err(PredictorError::InvalidConfig(
            "hidden layers must be non-empty".into(),
        ));
    }

    let normalizer = Normalizer::fit(train_set.iter().map(|s| (s.features(), s.t_to_blk)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = RegressionNet::new(&cfg.hidden, cfg.activation, normalizer.clone(), &mut rng);
    let train_rows = normalized(train_set, &normalizer);
    let val_rows = normalized(val_set, &normalizer);
    // Losses are computed on the normalized label; report them in s^2.
    let to_s2 = normalizer.label_span().powi(2);

    let mut adam = Adam::new(cfg.adam, net.params().len());
    let mut grad = vec![0.0; net.params().len()];
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_rows[i]));
            let loss = net.loss_and_grad(&batch, &mut grad, &mut ws);
            if !loss.is_finite() {
                return Err(PredictorError::Diverged { epoch, loss });
            }
            adam.step(net.params_mut(), &grad);
            sum += loss;
            batches += 1;
        }
        let train_mse = sum / batches as f64 * to_s2;
        let val_mse = if val_rows.is_empty() {
            f64::NAN
        } else {
            net.loss(&val_rows, &mut ws) * to_s2
        };
        if !train_mse.is_finite() || (!val_rows.is_empty() && !val_mse.is_finite()) {
            return Err(PredictorError::Diverged {
                epoch,
                loss: train_mse,
            });
        }
        debug!(epoch, train_mse, val_mse, "epoch done");
        history.push(EpochLoss {
            epoch,
            train_mse,
            val_mse,
        });
        let score = if val_rows.is_empty() {
            f64::NEG_INFINITY
        } else {
            val_mse
        };
        if best
            .as_ref()
            .is_none_or(|(b, _, _)| score < *b || val_rows.is_empty())
        {
            best = Some((score, epoch, net.params().to_vec()));
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    net.params_mut().copy_from_slice(&params);
    Ok(TrainOutcome {
        net,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize, f: impl Fn(f64, f64, f64) -> f64) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let x = (i % 30) as f64 * 3.0;
                let y = (i % 7) as f64 * 2.0;
                let speed = 2.0 + (i % 5) as f64 * 3.0;
                Sample {
                    x,
                    y,
                    speed,
                    t_to_blk: f(x, y, speed),
                }
            })
            .collect()
    }

    #[test]
    fn learns_a_constant() {
        let data = rows(200, |_, _, _| 4.2);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 10,
            hidden: vec![8, 8],
            ..TrainConfig::default()
        };
        let out = train(&data, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), 30);
        assert!(
            out.history.last().unwrap().train_mse < 1e-4,
            "{:?}",
            out.history.last()
        );
        let p = super::super::predict(&out.net, 10.0, 3.0, 5.0).unwrap();
        assert!((p.seconds - 4.2).abs() < 0.02, "{}", p.seconds);
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let data = rows(120, |x, _, v| (60.0 - x).max(0.0) / v);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 20,
            hidden: vec![16, 16],
            ..TrainConfig::default()
        };
        let a = train(&data, &data[..40], &cfg).unwrap();
        let b = train(&data, &data[..40], &cfg).unwrap();
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.history, b.history);
        let c = train(&data, &data[..40], &TrainConfig { seed: 99, ..cfg }).unwrap();
        assert_ne!(a.net.params(), c.net.params());
    }

    #[test]
    fn config_errors() {
        let data = rows(10, |_, _, _| 1.0);
        assert!(train(&[], &[], &TrainConfig::default()).is_err());
        let big_batch = TrainConfig {
            batch_size: 11,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&data, &[], &big_batch),
            Err(PredictorError::InvalidConfig(_))
        ));
        let zero = TrainConfig {
            epochs: 0,
            batch_size: 5,
            ..TrainConfig::default()
        };
        assert!(train(&data, &[], &zero).is_err());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let data = rows(40, |x, _, _| x);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 10,
            hidden: vec![4],
            adam: AdamConfig {
                learning_rate: f64::INFINITY,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        match train(&data, &[], &cfg) {
            Err(PredictorError::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
