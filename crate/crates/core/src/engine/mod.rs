//! Discrete-event simulation of one user passing the street.
//!
//! Cameras capture at a fixed rate; every completed image pair travels
//! through transfer, detection and inference delays before the handover
//! logic sees it. Link quality is sampled on a fixed grid on top of the
//! sparse event queue.

mod metrics;
mod queue;
mod report;
mod sweep;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use tracing::{debug, warn};

pub use metrics::{compare, metrics, Comparison, HoPoint, PlanSummary, Summary};
pub use queue::EventQueue;
pub use report::{write_events_jsonl, write_frames_jsonl, write_trace_csv};
pub use sweep::{normalized_drop_pct, sweep, trigger_row, SweepAxis, SweepPoint, TriggerRow};

use crate::channel::{dbm_to_mw, mos, Bell};
use crate::config::{Scenario, StrategyKind};
use crate::error::EngineError;
use crate::perception::{update_track, Frame, ObjectClass, SceneObject, Track, FRAMES_PER_SECOND};
use crate::pho::{
    detect_blk, pho_step, plan_trigger, reactive_step, select_target, BlkEvent, HoInput, HoPhase,
    HoState, ReactiveState, TriggerDecision, TriggerPlan,
};
use crate::predictor::BlockagePredictor;
use crate::scene::{position_at, ObstacleClass, SbsId, ShadowInterval};
use crate::time::SimTime;

/// One instant of the serving link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub x_m: f64,
    pub serving_id: SbsId,
    pub rssi_dbm: f64,
    pub rssi_norm: f64,
    pub mos: f64,
    pub state: HoPhase,
    /// The serving link is inside its obstacle shadow.
    #[serde(skip)]
    pub blocked: bool,
}

/// RSS from one SBS at every sample instant, obstacle loss included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SbsTrace {
    pub sbs_id: SbsId,
    pub rssi_dbm: Vec<f64>,
}

/// A state transition, as written to the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoRecord {
    pub t: f64,
    pub transition: HoPhase,
    pub serving: SbsId,
    pub target: Option<SbsId>,
    pub t_to_blk: Option<f64>,
    pub t_w: Option<f64>,
    pub d: Option<f64>,
    pub t_exec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub trace: Vec<TraceRow>,
    pub rss_traces: Vec<SbsTrace>,
    pub events: Vec<HoRecord>,
    pub frames: Vec<Frame>,
    /// The armed plan, if a handover was planned.
    pub plan: Option<TriggerPlan>,
    /// Predicted time to blockage before guard and offset were applied.
    pub predicted_t_to_blk: Option<f64>,
    pub trigger: Option<HoPoint>,
    pub completion: Option<HoPoint>,
    pub summary: Summary,
}

#[derive(Debug)]
enum Event {
    FrameCapture {
        seq: u64,
    },
    ImagesAtServer {
        camera: usize,
        pair: Vec<(SimTime, Frame)>,
    },
    DetectionDone {
        camera: usize,
        pair: Vec<(SimTime, Frame)>,
    },
    InferenceDone {
        blk: BlkEvent,
    },
    TriggerFire,
    HoComplete,
    Sample {
        k: u64,
    },
}

impl Event {
    fn name(&self) -> &'static str {
        match self {
            Event::FrameCapture { .. } => "frame_capture",
            Event::ImagesAtServer { .. } => "images_at_server",
            Event::DetectionDone { .. } => "detection_done",
            Event::InferenceDone { .. } => "inference_done",
            Event::TriggerFire => "trigger_fire",
            Event::HoComplete => "ho_complete",
            Event::Sample { .. } => "sample",
        }
    }
}

/// Capture instant of frame `k`, rounded to the nanosecond.
pub fn frame_time(k: u64) -> SimTime {
    let fps = FRAMES_PER_SECOND as u128;
    SimTime::from_nanos(((k as u128 * 1_000_000_000 + fps / 2) / fps) as u64)
}

/// Per-SBS channel lookups with the shadows precomputed.
struct Links {
    cells: Vec<(SbsId, Bell, Option<ShadowInterval>)>,
}

impl Links {
    fn new(s: &Scenario) -> Result<Self, EngineError> {
        let mut cells = Vec::with_capacity(s.scene.sbs_list.len());
        for site in &s.scene.sbs_list {
            cells.push((
                site.id,
                *s.rss.bell(site.id)?,
                s.scene.blocked_interval(site.id)?,
            ));
        }
        cells.sort_by_key(|c| c.0);
        Ok(Links { cells })
    }

    fn cell(&self, id: SbsId) -> &(SbsId, Bell, Option<ShadowInterval>) {
        self.cells
            .iter()
            .find(|c| c.0 == id)
            .expect("serving SBS exists")
    }

    fn rss(&self, s: &Scenario, id: SbsId, x: f64) -> f64 {
        let (_, bell, shadow) = self.cell(id);
        bell.at(x) - s.blockage.loss_at(x, shadow.as_ref())
    }

    fn blocked(&self, id: SbsId, x: f64) -> bool {
        self.cell(id).2.is_some_and(|sh| sh.contains(x))
    }

    fn best(&self, s: &Scenario, x: f64) -> SbsId {
        let mut best = (self.cells[0].0, f64::NEG_INFINITY);
        for c in &self.cells {
            let r = self.rss(s, c.0, x);
            if r > best.1 {
                best = (c.0, r);
            }
        }
        best.0
    }

    fn shadows(&self) -> Vec<ShadowInterval> {
        self.cells.iter().filter_map(|c| c.2).collect()
    }
}

fn obstacle_object(s: &Scenario) -> Option<SceneObject> {
    let ob = s.scene.obstacle.as_ref()?;
    let (cx, cy) = ob.footprint.center();
    Some(SceneObject {
        class_label: match ob.class_label {
            ObstacleClass::Bus => ObjectClass::Bus,
            // The detector has no generic obstacle class; trucks stand in.
            ObstacleClass::Truck | ObstacleClass::Other => ObjectClass::Truck,
        },
        center_x: cx,
        center_y: cy,
        width_m: ob.footprint.width(),
        depth_m: ob.footprint.depth(),
    })
}

/// Folds one frame into a camera's track list. Moving objects whose box is
/// clipped by the image edge are skipped: their box center is biased.
fn fold_frame(
    tracks: &mut Vec<Track>,
    next_id: &mut u32,
    frame: &Frame,
    s: &Scenario,
    camera: usize,
) {
    let cam = &s.scene.sbs_list[camera].camera;
    for det in &frame.detections {
        if !det.class_label.is_obstacle() && det.touches_border(cam) {
            continue;
        }
        match tracks.iter_mut().find(|t| t.class_label == det.class_label) {
            Some(t) => match update_track(t, det, cam, frame.timestamp) {
                Ok(u) => *t = u,
                Err(e) => debug!(%e, "track update skipped"),
            },
            None => {
                *next_id += 1;
                tracks.push(Track::new(*next_id, det, cam, frame.timestamp));
            }
        }
    }
}

struct Sim<'a> {
    s: &'a Scenario,
    predictor: Option<&'a dyn BlockagePredictor>,
    links: Links,
    shadows: Vec<ShadowInterval>,
    queue: EventQueue<Event>,
    end: SimTime,
    detector_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    objects_static: Option<SceneObject>,
    buffers: Vec<Vec<(SimTime, Frame)>>,
    tracks: Vec<Vec<Track>>,
    next_track_id: u32,
    pho: HoState,
    reactive: ReactiveState,
    aborted: Vec<SbsId>,
    trace: Vec<TraceRow>,
    rss_traces: Vec<SbsTrace>,
    events: Vec<HoRecord>,
    frames: Vec<Frame>,
    predicted: Option<f64>,
    trigger: Option<HoPoint>,
    completion: Option<HoPoint>,
    last_time: SimTime,
}

impl<'a> Sim<'a> {
    fn serving(&self) -> SbsId {
        match self.s.strategy.kind {
            StrategyKind::Reactive => self.reactive.serving(),
            _ => self.pho.serving,
        }
    }

    fn phase(&self) -> HoPhase {
        match self.s.strategy.kind {
            StrategyKind::Reactive => self.reactive.phase(),
            _ => self.pho.phase,
        }
    }

    fn record(
        &mut self,
        now: SimTime,
        phase: HoPhase,
        plan: Option<&TriggerPlan>,
        t_to_blk: Option<f64>,
    ) {
        let serving = self.serving();
        let target = match phase {
            HoPhase::Waiting | HoPhase::HoTriggered => plan.map(|p| p.target_sbs),
            _ => None,
        };
        self.events.push(HoRecord {
            t: now.as_secs_f64(),
            transition: phase,
            serving,
            target,
            t_to_blk,
            t_w: plan.map(|p| p.t_w.as_secs_f64()),
            d: plan.map(|p| p.trigger_distance_d),
            t_exec: plan.map(|p| self.s.budget.t_exec(p.t_w).as_secs_f64()),
        });
    }

    fn point(&self, now: SimTime, sbs: SbsId) -> HoPoint {
        let x = position_at(&self.s.scene, now.as_secs_f64()).x;
        HoPoint {
            t_s: now.as_secs_f64(),
            x_m: x,
            sbs_id: sbs,
            rssi_dbm: self.links.rss(self.s, sbs, x),
            rssi_norm: None,
        }
    }

    fn step_pho(&mut self, input: HoInput, now: SimTime) -> Result<(), EngineError> {
        self.pho = pho_step(&self.pho, input, now)?;
        Ok(())
    }

    fn handle(&mut self, now: SimTime, ev: Event) -> Result<(), EngineError> {
        debug_assert!(now >= self.last_time, "{} went back in time", ev.name());
        self.last_time = now;
        match ev {
            Event::FrameCapture { seq } => self.on_frame(now, seq),
            Event::ImagesAtServer { camera, pair } => {
                self.queue.push(
                    now + self.s.budget.t_odl,
                    Event::DetectionDone { camera, pair },
                );
                Ok(())
            }
            Event::DetectionDone { camera, pair } => self.on_detection(now, camera, pair),
            Event::InferenceDone { blk } => self.on_inference(now, blk),
            Event::TriggerFire => {
                self.step_pho(HoInput::TriggerFire, now)?;
                let plan = self.pho.plan;
                self.trigger = Some(self.point(now, self.pho.serving));
                self.record(now, HoPhase::HoTriggered, plan.as_ref(), None);
                Ok(())
            }
            Event::HoComplete => {
                self.step_pho(HoInput::Complete, now)?;
                let plan = self.pho.plan;
                self.completion = Some(self.point(now, self.pho.serving));
                self.record(now, HoPhase::HoComplete, plan.as_ref(), None);
                Ok(())
            }
            Event::Sample { k } => self.on_sample(now, k),
        }
    }

    fn on_frame(&mut self, now: SimTime, seq: u64) -> Result<(), EngineError> {
        let next = frame_time(seq + 1);
        if next <= self.end {
            self.queue.push(next, Event::FrameCapture { seq: seq + 1 });
        }
        let t = now.as_secs_f64();
        let pos = position_at(&self.s.scene, t);
        let mut objects = Vec::with_capacity(2);
        objects.extend(self.objects_static);
        if !pos.at_end {
            objects.push(SceneObject {
                class_label: ObjectClass::Car,
                center_x: pos.x,
                center_y: pos.y,
                width_m: self.s.user.length_m,
                depth_m: self.s.user.width_m,
            });
        }
        for (i, site) in self.s.scene.sbs_list.iter().enumerate() {
            let frame = self.s.detector.capture(
                &site.camera,
                site.id,
                seq,
                t,
                &objects,
                &mut self.detector_rng,
            );
            if self.s.record_frames {
                self.frames.push(frame.clone());
            }
            self.buffers[i].push((now, frame));
            // Frames (2j, 2j+1) form a pair.
            if seq % 2 == 1 {
                let pair = std::mem::take(&mut self.buffers[i]);
                self.queue.push(
                    now + self.s.budget.t_rgb,
                    Event::ImagesAtServer { camera: i, pair },
                );
            }
        }
        Ok(())
    }

    fn on_detection(
        &mut self,
        now: SimTime,
        camera: usize,
        pair: Vec<(SimTime, Frame)>,
    ) -> Result<(), EngineError> {
        let Some(&(captured, _)) = pair.last() else {
            return Ok(());
        };
        let first_t = pair[0].1.timestamp;
        let tracks = &mut self.tracks[camera];
        for (_, frame) in &pair {
            fold_frame(tracks, &mut self.next_track_id, frame, self.s, camera);
        }
        // Moving objects not seen in this pair have left the view.
        tracks.retain(|t| t.class_label.is_obstacle() || t.last_update >= first_t);

        if self.s.strategy.kind != StrategyKind::Proactive
            || !matches!(self.pho.phase, HoPhase::Monitoring | HoPhase::HoComplete)
            || self.aborted.contains(&self.pho.serving)
        {
            return Ok(());
        }
        if let Some(blk) = detect_blk(
            &self.tracks[camera],
            &self.shadows,
            self.pho.serving,
            captured,
        ) {
            debug!(camera, x = blk.user_track.last_pos_m.0, "blockage event");
            self.step_pho(HoInput::Blk(blk.clone()), now)?;
            self.record(now, HoPhase::BlkDetected, None, None);
            self.queue
                .push(now + self.s.budget.t_inf, Event::InferenceDone { blk });
        }
        Ok(())
    }

    fn abort(&mut self, now: SimTime, t_to_blk: f64) -> Result<(), EngineError> {
        self.aborted.push(self.pho.serving);
        self.step_pho(HoInput::Plan(TriggerDecision::Abort { t_to_blk }), now)?;
        self.record(now, HoPhase::Monitoring, None, Some(t_to_blk));
        Ok(())
    }

    fn on_inference(&mut self, now: SimTime, blk: BlkEvent) -> Result<(), EngineError> {
        let track = &blk.user_track;
        let speed = track.speed_mps;
        let predicted = match self.predictor {
            Some(p) => p.predict_time(track.last_pos_m.0, track.last_pos_m.1, speed),
            None => {
                warn!("no predictor available; handover aborted");
                return self.abort(now, f64::NAN);
            }
        };
        let predicted = match predicted {
            Ok(p) => p.seconds,
            Err(e) => {
                warn!(%e, "prediction failed; handover aborted");
                return self.abort(now, f64::NAN);
            }
        };
        self.predicted = Some(predicted);
        let target = match select_target(&self.s.scene, &self.s.rss, self.pho.serving, &blk.shadow)
        {
            Ok(t) => t,
            Err(e) => {
                warn!(%e, "handover aborted");
                return self.abort(now, predicted);
            }
        };
        let st = &self.s.strategy;
        let mut effective = predicted - st.guard_s + st.trigger_offset_m / speed;
        if !st.complete_at_boundary {
            effective += self.s.budget.t_ho.as_secs_f64();
        }
        let decision = plan_trigger(effective, &self.s.budget, speed, blk.detected_at, target)?;
        match decision {
            TriggerDecision::Proceed(plan) => {
                self.step_pho(HoInput::Plan(decision), now)?;
                self.record(now, HoPhase::Waiting, Some(&plan), Some(predicted));
                self.queue.push(plan.trigger_at, Event::TriggerFire);
                self.queue.push(plan.complete_at, Event::HoComplete);
                Ok(())
            }
            TriggerDecision::Abort { .. } => {
                warn!(
                    predicted,
                    "not enough time to hand over; interruption expected"
                );
                self.abort(now, predicted)
            }
        }
    }

    fn on_sample(&mut self, now: SimTime, k: u64) -> Result<(), EngineError> {
        let next = SimTime::from_nanos((k + 1) * self.s.sample_dt.as_nanos() as u64);
        if next <= self.end {
            self.queue.push(next, Event::Sample { k: k + 1 });
        }
        let x = position_at(&self.s.scene, now.as_secs_f64()).x;
        let mut rssi = self.links.rss(self.s, self.serving(), x);
        if let Some(n) = &self.jitter {
            rssi += n.sample(&mut self.jitter_rng);
        }
        if self.s.strategy.kind == StrategyKind::Reactive {
            let before = self.reactive.phase();
            let best = self.links.best(self.s, x);
            self.reactive = reactive_step(&self.reactive, rssi, now, &self.s.reactive, best)?;
            if self.reactive.phase() != before {
                let phase = self.reactive.phase();
                self.record(now, phase, None, None);
                if phase == HoPhase::Reconnected {
                    self.completion = Some(self.point(now, self.reactive.serving()));
                    rssi = self.links.rss(self.s, self.reactive.serving(), x);
                }
            }
        }
        for tr in &mut self.rss_traces {
            tr.rssi_dbm.push(self.links.rss(self.s, tr.sbs_id, x));
        }
        let serving = self.serving();
        self.trace.push(TraceRow {
            t_s: now.as_secs_f64(),
            x_m: x,
            serving_id: serving,
            rssi_dbm: rssi,
            rssi_norm: 0.0,
            mos: mos(&self.s.mos, rssi),
            state: self.phase(),
            blocked: self.links.blocked(serving, x),
        });
        Ok(())
    }
}

/// Runs one scenario to the end of the street (or the horizon).
///
/// `predictor` is only consulted by the proactive strategy; `None` there
/// makes every blockage event abort.
pub fn run(
    s: &Scenario,
    predictor: Option<&dyn BlockagePredictor>,
    seed: u64,
) -> Result<RunResult, EngineError> {
    let links = Links::new(s)?;
    let shadows = links.shadows();
    let mut end_s = s.scene.exit_time_s();
    if let Some(h) = s.horizon_s {
        end_s = end_s.min(h);
    }
    let serving = s.initial_serving();
    let jitter =
        (s.jitter_db > 0.0).then(|| Normal::new(0.0, s.jitter_db).expect("validated jitter"));
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(seed);
    jitter_rng.set_stream(1);
    let n_cam = s.scene.sbs_list.len();
    let mut sim = Sim {
        s,
        predictor,
        shadows,
        queue: EventQueue::default(),
        end: SimTime::from_secs_f64(end_s),
        detector_rng: ChaCha8Rng::seed_from_u64(seed),
        jitter_rng,
        jitter,
        objects_static: obstacle_object(s),
        buffers: vec![Vec::new(); n_cam],
        tracks: vec![Vec::new(); n_cam],
        next_track_id: 0,
        pho: HoState::new(serving),
        reactive: ReactiveState::new(serving),
        aborted: Vec::new(),
        trace: Vec::new(),
        rss_traces: links
            .cells
            .iter()
            .map(|c| SbsTrace {
                sbs_id: c.0,
                rssi_dbm: Vec::new(),
            })
            .collect(),
        links,
        events: Vec::new(),
        frames: Vec::new(),
        predicted: None,
        trigger: None,
        completion: None,
        last_time: SimTime::ZERO,
    };
    if s.strategy.kind == StrategyKind::Proactive || s.record_frames {
        sim.queue
            .push(SimTime::ZERO, Event::FrameCapture { seq: 0 });
    }
    sim.queue.push(SimTime::ZERO, Event::Sample { k: 0 });
    while let Some((now, _, ev)) = sim.queue.pop() {
        if now > sim.end {
            break;
        }
        sim.handle(now, ev)?;
    }

    let max = sim
        .trace
        .iter()
        .map(|r| r.rssi_dbm)
        .fold(f64::NEG_INFINITY, f64::max);
    for r in &mut sim.trace {
        r.rssi_norm = dbm_to_mw(r.rssi_dbm - max);
    }
    let norm = |p: Option<HoPoint>| {
        p.map(|mut p| {
            p.rssi_norm = Some(dbm_to_mw(p.rssi_dbm - max));
            p
        })
    };
    let mut result = RunResult {
        strategy: s.strategy.kind,
        seed,
        trace: sim.trace,
        rss_traces: sim.rss_traces,
        events: sim.events,
        frames: sim.frames,
        plan: sim.pho.plan,
        predicted_t_to_blk: sim.predicted,
        trigger: norm(sim.trigger),
        completion: norm(sim.completion),
        summary: Summary::default(),
    };
    result.summary = metrics(&result, s);
    Ok(result)
}
