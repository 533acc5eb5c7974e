//! Blockage-event detection, trigger planning and handover state machines.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::channel::RssModel;
use crate::error::PhoError;
use crate::perception::Track;
use crate::scene::{Direction, SbsId, Scene, ShadowInterval};
use crate::time::{secs, serde_secs, SimTime};

/// Latencies between image capture and handover completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingBudget {
    /// Camera to server transfer of an image pair.
    #[serde(with = "serde_secs")]
    pub t_rgb: Duration,
    /// Object detection and localisation.
    #[serde(with = "serde_secs")]
    pub t_odl: Duration,
    /// Regression inference.
    #[serde(with = "serde_secs")]
    pub t_inf: Duration,
    /// Handover signalling.
    #[serde(with = "serde_secs")]
    pub t_ho: Duration,
}

impl Default for TimingBudget {
    fn default() -> Self {
        TimingBudget {
            t_rgb: secs(1e-5),
            t_odl: secs(0.102),
            t_inf: secs(0.001),
            t_ho: secs(0.050),
        }
    }
}

impl TimingBudget {
    /// Capture to end of inference.
    pub fn pre_trigger(&self) -> Duration {
        self.t_rgb + self.t_odl + self.t_inf
    }

    /// The fixed part of the execution time (everything except the wait).
    pub fn t_s(&self) -> Duration {
        self.pre_trigger() + self.t_ho
    }

    pub fn t_exec(&self, t_w: Duration) -> Duration {
        self.t_rgb + self.t_odl + self.t_inf + t_w + self.t_ho
    }
}

/// The server has seen an obstacle and a user heading into the serving
/// SBS's shadow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlkEvent {
    pub detected_at: SimTime,
    pub user_track: Track,
    pub shadow: ShadowInterval,
    pub serving_sbs: SbsId,
}

impl BlkEvent {
    pub fn direction(&self) -> Direction {
        if self.user_track.heading < 0.0 {
            Direction::Backward
        } else {
            Direction::Forward
        }
    }

    /// Distance from the user's estimated position to the shadow edge ahead.
    pub fn distance_to_shadow(&self) -> f64 {
        let x = self.user_track.last_pos_m.0;
        match self.direction() {
            Direction::Forward => self.shadow.x_enter - x,
            Direction::Backward => x - self.shadow.x_exit,
        }
    }
}

/// Returns an event iff an obstacle is tracked, the serving SBS has a shadow
/// on the lane, and a moving user is in front of that shadow heading into it.
pub fn detect_blk(
    tracks: &[Track],
    shadows: &[ShadowInterval],
    serving_sbs: SbsId,
    detected_at: SimTime,
) -> Option<BlkEvent> {
    if !tracks.iter().any(|t| t.class_label.is_obstacle()) {
        return None;
    }
    let shadow = shadows.iter().find(|s| s.sbs_id == serving_sbs)?;
    let user = tracks.iter().find(|t| {
        if t.class_label.is_obstacle() || !t.has_speed() {
            return false;
        }
        let x = t.last_pos_m.0;
        (t.heading > 0.0 && x < shadow.x_enter) || (t.heading < 0.0 && x > shadow.x_exit)
    })?;
    Some(BlkEvent {
        detected_at,
        user_track: user.clone(),
        shadow: *shadow,
        serving_sbs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriggerPlan {
    pub t_to_blk: f64,
    #[serde(with = "serde_secs")]
    pub t_w: Duration,
    pub trigger_distance_d: f64,
    pub trigger_at: SimTime,
    pub complete_at: SimTime,
    pub target_sbs: SbsId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TriggerDecision {
    Proceed(TriggerPlan),
    /// Not enough time left to hand over before the shadow.
    Abort {
        t_to_blk: f64,
    },
}

/// Waits out the slack between the prediction and the fixed budget so that
/// the handover completes `t_to_blk` after `detected_at`.
pub fn plan_trigger(
    t_to_blk: f64,
    budget: &TimingBudget,
    speed: f64,
    detected_at: SimTime,
    target_sbs: SbsId,
) -> Result<TriggerDecision, PhoError> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(PhoError::InvalidSpeed(speed));
    }
    if !(t_to_blk >= 0.0) {
        return Ok(TriggerDecision::Abort { t_to_blk });
    }
    let Some(t_w) = secs(t_to_blk).checked_sub(budget.t_s()) else {
        return Ok(TriggerDecision::Abort { t_to_blk });
    };
    let trigger_at = detected_at + budget.pre_trigger() + t_w;
    Ok(TriggerDecision::Proceed(TriggerPlan {
        t_to_blk,
        t_w,
        trigger_distance_d: speed * t_w.as_secs_f64(),
        trigger_at,
        complete_at: trigger_at + budget.t_ho,
        target_sbs,
    }))
}

/// Strongest unblocked neighbor at the middle of the serving cell's shadow.
pub fn select_target(
    scene: &Scene,
    rss: &RssModel,
    serving: SbsId,
    shadow: &ShadowInterval,
) -> Result<SbsId, PhoError> {
    let probe = shadow.midpoint();
    let mut best: Option<(SbsId, f64)> = None;
    let mut ids: Vec<SbsId> = scene
        .sbs_list
        .iter()
        .map(|s| s.id)
        .filter(|&id| id != serving)
        .collect();
    ids.sort();
    for id in ids {
        let own = scene
            .blocked_interval(id)
            .map_err(|e| PhoError::NoTarget(e.to_string()))?;
        if own.is_some_and(|s| s.contains(probe)) {
            continue;
        }
        let Ok(bell) = rss.bell(id) else { continue };
        let r = bell.at(probe);
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((id, r));
        }
    }
    best.map(|(id, _)| id).ok_or_else(|| {
        PhoError::NoTarget(format!(
            "no SBS other than {serving} has line of sight at x = {probe:.2} m"
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoPhase {
    Monitoring,
    BlkDetected,
    Waiting,
    HoTriggered,
    HoComplete,
    Interrupted,
    Reconnected,
}

impl HoPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            HoPhase::Monitoring => "monitoring",
            HoPhase::BlkDetected => "blk_detected",
            HoPhase::Waiting => "waiting",
            HoPhase::HoTriggered => "ho_triggered",
            HoPhase::HoComplete => "ho_complete",
            HoPhase::Interrupted => "interrupted",
            HoPhase::Reconnected => "reconnected",
        }
    }
}

impl fmt::Display for HoPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inputs of the proactive machine.
#[derive(Debug, Clone, PartialEq)]
pub enum HoInput {
    Blk(BlkEvent),
    Plan(TriggerDecision),
    TriggerFire,
    Complete,
}

impl HoInput {
    fn name(&self) -> &'static str {
        match self {
            HoInput::Blk(_) => "blk",
            HoInput::Plan(TriggerDecision::Proceed(_)) => "plan",
            HoInput::Plan(TriggerDecision::Abort { .. }) => "abort",
            HoInput::TriggerFire => "trigger_fire",
            HoInput::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoState {
    pub phase: HoPhase,
    pub serving: SbsId,
    pub target: Option<SbsId>,
    pub plan: Option<TriggerPlan>,
    pub blk: Option<BlkEvent>,
    /// Set when a plan was aborted: the user will run into the shadow.
    pub interruption_pending: bool,
    pub transitions: Vec<(SimTime, HoPhase)>,
}

impl HoState {
    pub fn new(serving: SbsId) -> Self {
        HoState {
            phase: HoPhase::Monitoring,
            serving,
            target: None,
            plan: None,
            blk: None,
            interruption_pending: false,
            transitions: vec![(SimTime::ZERO, HoPhase::Monitoring)],
        }
    }

    pub fn last_transition(&self) -> SimTime {
        self.transitions.last().map_or(SimTime::ZERO, |t| t.0)
    }

    fn enter(&mut self, phase: HoPhase, now: SimTime) {
        self.phase = phase;
        self.transitions.push((now, phase));
    }
}

fn check_time(state: &HoState, now: SimTime) -> Result<(), PhoError> {
    let last = state.last_transition();
    if now < last {
        return Err(PhoError::NonMonotonicTime {
            now: now.as_secs_f64(),
            last: last.as_secs_f64(),
        });
    }
    Ok(())
}

/// Advances the proactive machine. On error the state is left untouched.
pub fn pho_step(state: &HoState, input: HoInput, now: SimTime) -> Result<HoState, PhoError> {
    check_time(state, now)?;
    let illegal = || PhoError::IllegalTransition {
        state: state.phase.to_string(),
        input: input.name().into(),
    };
    let mut next = state.clone();
    match (state.phase, &input) {
        (HoPhase::Monitoring | HoPhase::HoComplete, HoInput::Blk(ev)) => {
            if ev.serving_sbs != state.serving {
                return Err(illegal());
            }
            next.blk = Some(ev.clone());
            next.target = None;
            next.plan = None;
            next.enter(HoPhase::BlkDetected, now);
        }
        (HoPhase::BlkDetected, HoInput::Plan(TriggerDecision::Proceed(plan))) => {
            if plan.trigger_at < now || plan.target_sbs == state.serving {
                return Err(illegal());
            }
            next.target = Some(plan.target_sbs);
            next.plan = Some(*plan);
            next.enter(HoPhase::Waiting, now);
        }
        (HoPhase::BlkDetected, HoInput::Plan(TriggerDecision::Abort { .. })) => {
            next.interruption_pending = true;
            next.blk = None;
            next.enter(HoPhase::Monitoring, now);
        }
        (HoPhase::Waiting, HoInput::TriggerFire) => {
            let plan = state.plan.as_ref().ok_or_else(illegal)?;
            if now < plan.trigger_at {
                return Err(illegal());
            }
            next.enter(HoPhase::HoTriggered, now);
        }
        (HoPhase::HoTriggered, HoInput::Complete) => {
            let plan = state.plan.as_ref().ok_or_else(illegal)?;
            if now < plan.complete_at {
                return Err(illegal());
            }
            next.serving = plan.target_sbs;
            next.target = None;
            next.enter(HoPhase::HoComplete, now);
        }
        _ => return Err(illegal()),
    }
    Ok(next)
}

/// Parameters of the measurement-driven baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactiveConfig {
    pub threshold_dbm: f64,
    #[serde(with = "serde_secs")]
    pub time_to_trigger: Duration,
    #[serde(with = "serde_secs")]
    pub reconnection_delay: Duration,
}

impl ReactiveConfig {
    /// Threshold 20 dB below `peak_dbm`, 100 ms time-to-trigger, 150 ms
    /// reconnection.
    pub fn for_peak(peak_dbm: f64) -> Self {
        ReactiveConfig {
            threshold_dbm: peak_dbm - 20.0,
            time_to_trigger: secs(0.100),
            reconnection_delay: secs(0.150),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactiveState {
    pub ho: HoState,
    below_since: Option<SimTime>,
    interrupted_at: Option<SimTime>,
}

impl ReactiveState {
    pub fn new(serving: SbsId) -> Self {
        ReactiveState {
            ho: HoState::new(serving),
            below_since: None,
            interrupted_at: None,
        }
    }

    pub fn phase(&self) -> HoPhase {
        self.ho.phase
    }

    pub fn serving(&self) -> SbsId {
        self.ho.serving
    }
}

/// Feeds one serving-link measurement to the baseline. `best` is the
/// strongest SBS at `now`, used when the reconnection delay has elapsed.
pub fn reactive_step(
    state: &ReactiveState,
    rssi_dbm: f64,
    now: SimTime,
    cfg: &ReactiveConfig,
    best: SbsId,
) -> Result<ReactiveState, PhoError> {
    check_time(&state.ho, now)?;
    let mut next = state.clone();
    match state.ho.phase {
        HoPhase::Monitoring | HoPhase::Reconnected => {
            if rssi_dbm < cfg.threshold_dbm {
                let since = *next.below_since.get_or_insert(now);
                if now - since >= cfg.time_to_trigger {
                    next.below_since = None;
                    next.interrupted_at = Some(now);
                    next.ho.enter(HoPhase::Interrupted, now);
                }
            } else {
                next.below_since = None;
            }
        }
        HoPhase::Interrupted => {
            let since = state.interrupted_at.unwrap_or(now);
            if now - since >= cfg.reconnection_delay {
                next.interrupted_at = None;
                next.ho.serving = best;
                next.ho.enter(HoPhase::Reconnected, now);
            }
        }
        other => {
            return Err(PhoError::IllegalTransition {
                state: other.to_string(),
                input: "measurement".into(),
            })
        }
    }
    Ok(next)
}
