use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::config::Scenario;
use crate::pho::HoPhase;
use crate::scene::SbsId;

/// Link state at a handover milestone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoPoint {
    pub t_s: f64,
    pub x_m: f64,
    pub sbs_id: SbsId,
    pub rssi_dbm: f64,
    /// Linear power relative to the serving trace maximum.
    pub rssi_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub predicted_t_to_blk_s: f64,
    pub t_w_s: f64,
    pub d_m: f64,
    pub t_s_s: f64,
    pub t_exec_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Summary {
    pub samples: usize,
    pub duration_s: f64,
    pub handovers: usize,
    /// Time the user had no usable link: serving link shadowed or the
    /// baseline's interruption state.
    pub interruption_s: f64,
    /// Time the serving link spent inside its shadow.
    pub in_shadow_s: f64,
    pub min_mos: f64,
    pub mean_mos: f64,
    /// Fraction of samples per MOS region 1..=5 (nearest integer).
    pub mos_region_fraction: [f64; 5],
    /// Relative drop of the minimum MOS below the best score.
    pub mos_drop_pct: f64,
    pub min_rssi_dbm: f64,
    /// Largest obstacle loss seen on the serving link.
    pub max_blockage_loss_db: f64,
    pub shadow_entry_x: Option<f64>,
    pub trigger: Option<HoPoint>,
    pub completion: Option<HoPoint>,
    pub completed_before_shadow: Option<bool>,
    pub plan: Option<PlanSummary>,
}

/// Aggregates a finished run.
pub fn metrics(r: &RunResult, s: &Scenario) -> Summary {
    let n = r.trace.len();
    let dt = s.sample_dt.as_secs_f64();
    let mut out = Summary {
        samples: n,
        duration_s: r.trace.last().map_or(0.0, |row| row.t_s),
        handovers: r
            .events
            .iter()
            .filter(|e| matches!(e.transition, HoPhase::HoComplete | HoPhase::Reconnected))
            .count(),
        trigger: r.trigger,
        completion: r.completion,
        ..Summary::default()
    };
    if n == 0 {
        return out;
    }
    let mut min_mos = f64::INFINITY;
    let mut sum_mos = 0.0;
    let mut min_rssi = f64::INFINITY;
    let mut regions = [0usize; 5];
    let mut interrupted = 0usize;
    let mut shadowed = 0usize;
    for row in &r.trace {
        min_mos = min_mos.min(row.mos);
        sum_mos += row.mos;
        min_rssi = min_rssi.min(row.rssi_dbm);
        regions[(row.mos.round() as usize).clamp(1, 5) - 1] += 1;
        shadowed += row.blocked as usize;
        interrupted += (row.blocked || row.state == HoPhase::Interrupted) as usize;
    }
    let mut max_loss: f64 = 0.0;
    for row in r.trace.iter().filter(|row| row.blocked) {
        let shadow = s.scene.blocked_interval(row.serving_id).ok().flatten();
        max_loss = max_loss.max(s.blockage.loss_at(row.x_m, shadow.as_ref()));
    }
    out.min_mos = min_mos;
    out.mean_mos = sum_mos / n as f64;
    out.mos_region_fraction = regions.map(|c| c as f64 / n as f64);
    out.mos_drop_pct = (5.0 - min_mos) / 5.0 * 100.0;
    out.min_rssi_dbm = min_rssi;
    out.max_blockage_loss_db = max_loss;
    out.interruption_s = interrupted as f64 * dt;
    out.in_shadow_s = shadowed as f64 * dt;
    out.shadow_entry_x = s
        .shadow_of(s.initial_serving())
        .map(|sh| sh.entry_edge(s.scene.trajectory.direction));
    out.completed_before_shadow = match (r.completion, out.shadow_entry_x) {
        (Some(c), Some(edge)) => Some((c.x_m - edge) * s.scene.trajectory.direction.sign() < 0.0),
        _ => None,
    };
    out.plan = r.plan.map(|p| PlanSummary {
        predicted_t_to_blk_s: r.predicted_t_to_blk.unwrap_or(p.t_to_blk),
        t_w_s: p.t_w.as_secs_f64(),
        d_m: p.trigger_distance_d,
        t_s_s: s.budget.t_s().as_secs_f64(),
        t_exec_s: s.budget.t_exec(p.t_w).as_secs_f64(),
    });
    out
}

/// Baseline against proactive handover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_min_mos: f64,
    pub pho_min_mos: f64,
    /// Minimum-MOS gain relative to the best score of 5.
    pub qoe_gain_pct: f64,
    pub baseline_interruption_s: f64,
    pub pho_interruption_s: f64,
}

pub fn compare(baseline: &Summary, pho: &Summary) -> Comparison {
    Comparison {
        baseline_min_mos: baseline.min_mos,
        pho_min_mos: pho.min_mos,
        qoe_gain_pct: (pho.min_mos - baseline.min_mos) / 5.0 * 100.0,
        baseline_interruption_s: baseline.interruption_s,
        pho_interruption_s: pho.interruption_s,
    }
}
