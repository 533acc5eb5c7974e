use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, RunResult};
use crate::config::ScenarioConfig;
use crate::error::EngineError;
use crate::pho::{plan_trigger, TriggerDecision};
use crate::predictor::BlockagePredictor;
use crate::scene::SbsId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Values in mph.
    Speed,
    /// Values in metres.
    TriggerOffset,
    /// Values in dB.
    BlockageLoss,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "speed" => Some(SweepAxis::Speed),
            "trigger_offset" | "trigger-offset" => Some(SweepAxis::TriggerOffset),
            "blockage_loss" | "blockage-loss" => Some(SweepAxis::BlockageLoss),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Speed => "speed",
            SweepAxis::TriggerOffset => "trigger_offset",
            SweepAxis::BlockageLoss => "blockage_loss",
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) {
        match self {
            SweepAxis::Speed => cfg.scene.trajectory.set_speed_mph(value),
            SweepAxis::TriggerOffset => cfg.strategy.trigger_offset_m = value,
            SweepAxis::BlockageLoss => cfg.channel.blockage.extra_loss_db = value,
        }
    }
}

/// Trigger plan for a request raised `request_distance_m` before the
/// blocked area at the configured speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerRow {
    pub speed_mps: f64,
    pub t_to_blk_s: f64,
    /// `None` when the request comes too late to plan.
    pub t_w_s: Option<f64>,
    pub d_m: Option<f64>,
}

pub fn trigger_row(cfg: &ScenarioConfig) -> Result<TriggerRow, EngineError> {
    let s = cfg.build()?;
    let v = s.scene.trajectory.speed_mps;
    let t_to_blk = s.strategy.request_distance_m / v;
    let (t_w, d) = match plan_trigger(t_to_blk, &s.budget, v, SimTime::ZERO, SbsId(0))? {
        TriggerDecision::Proceed(p) => (Some(p.t_w.as_secs_f64()), Some(p.trigger_distance_d)),
        TriggerDecision::Abort { .. } => (None, None),
    };
    Ok(TriggerRow {
        speed_mps: v,
        t_to_blk_s: t_to_blk,
        t_w_s: t_w,
        d_m: d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub table: TriggerRow,
    pub result: RunResult,
}

/// One independent run per value, in parallel; output keeps input order.
///
/// Without a `model` every run uses the exact kinematic predictor.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    model: Option<&dyn BlockagePredictor>,
) -> Result<Vec<SweepPoint>, EngineError> {
    if values.is_empty() {
        return Err(EngineError::Sweep("no values to sweep".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EngineError::Sweep("sweep values must be finite".into()));
    }
    values
        .par_iter()
        .map(|&value| {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, value);
            let s = cfg.build()?;
            let analytic = s.analytic_predictor();
            let predictor = model.or(analytic.as_ref().map(|p| p as &dyn BlockagePredictor));
            Ok(SweepPoint {
                value,
                table: trigger_row(&cfg)?,
                result: run(&s, predictor, s.seed)?,
            })
        })
        .collect()
}

/// Drop of normalized RSSI at handover completion, in percent, relative to
/// the point at value 0 (or the best point when 0 is not swept).
pub fn normalized_drop_pct(points: &[SweepPoint]) -> Vec<Option<f64>> {
    let norm = |p: &SweepPoint| p.result.completion.and_then(|c| c.rssi_norm);
    let reference = points
        .iter()
        .find(|p| p.value == 0.0)
        .and_then(norm)
        .or_else(|| points.iter().filter_map(norm).reduce(f64::max));
    points
        .iter()
        .map(|p| Some((1.0 - norm(p)? / reference?) * 100.0))
        .collect()
}
