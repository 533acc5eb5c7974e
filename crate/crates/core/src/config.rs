//! Scenario configuration: one TOML file fully determines a run.
//!
//! Every field has a default, so an empty file describes the reference
//! street: three SBSs, a parked bus, and a car passing at 30 mph.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{Bell, BlockageModel, MosMapping, RssModel};
use crate::error::ConfigError;
use crate::perception::{CameraModel, EmulatedDetector, FRAMES_PER_SECOND};
use crate::pho::{ReactiveConfig, TimingBudget};
use crate::predictor::{default_speed_set, Activation, AdamConfig, AnalyticPredictor, TrainConfig};
use crate::scene::{
    mph_to_mps, Direction, Footprint, Obstacle, ObstacleClass, Point3, SbsId, SbsSite, Scene,
    ShadowInterval, Trajectory,
};
use crate::time::secs;

/// Start position putting the 61st frame exactly 22 m before the default
/// shadow at 30 mph.
fn default_x_start() -> f64 {
    35.0 - 61.0 * mph_to_mps(30.0) / FRAMES_PER_SECOND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scene: SceneSection,
    pub channel: ChannelSection,
    pub budget: TimingBudget,
    pub strategy: StrategySection,
    pub perception: PerceptionSection,
    pub run: RunSection,
    pub paths: PathsSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub street_length_m: f64,
    pub street_width_m: f64,
    pub sbs: Vec<SbsSection>,
    pub obstacle: ObstacleSection,
    pub trajectory: TrajectorySection,
    pub user: UserSection,
    /// Overrides geometric shadows with a fixed blocked region.
    pub blocked_region_start_x: Option<f64>,
}

impl Default for SceneSection {
    fn default() -> Self {
        let sbs = |id, x, y, cam_x| SbsSection {
            id,
            x,
            y,
            z: 6.0,
            camera: CameraModel {
                segment_start_x: cam_x,
                ..CameraModel::default()
            },
        };
        SceneSection {
            street_length_m: 90.0,
            street_width_m: 15.0,
            sbs: vec![
                sbs(1, 30.0, 0.0, 0.0),
                sbs(2, 59.5, 15.0, 33.4),
                sbs(3, 85.0, 0.0, 60.0),
            ],
            obstacle: ObstacleSection::default(),
            trajectory: TrajectorySection::default(),
            user: UserSection::default(),
            blocked_region_start_x: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbsSection {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_sbs_height")]
    pub z: f64,
    #[serde(default)]
    pub camera: CameraModel,
}

fn default_sbs_height() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleSection {
    pub enabled: bool,
    pub class: ObstacleClass,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub height_m: f64,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        ObstacleSection {
            enabled: true,
            class: ObstacleClass::Bus,
            x_min: 54.0,
            x_max: 66.0,
            y_min: 6.0,
            y_max: 8.0,
            height_m: 3.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionName {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub y_lane: f64,
    pub x_start: f64,
    pub direction: DirectionName,
    /// Exactly one of the two speeds may be given.
    pub speed_mph: Option<f64>,
    pub speed_mps: Option<f64>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            y_lane: 9.0,
            x_start: default_x_start(),
            direction: DirectionName::Forward,
            speed_mph: Some(30.0),
            speed_mps: None,
        }
    }
}

impl TrajectorySection {
    pub fn speed(&self) -> Result<f64, ConfigError> {
        match (self.speed_mph, self.speed_mps) {
            (Some(_), Some(_)) => Err(ConfigError::field(
                "scene.trajectory.speed_mps",
                "give either speed_mph or speed_mps, not both",
            )),
            (Some(mph), None) => positive("scene.trajectory.speed_mph", mph).map(mph_to_mps),
            (None, Some(mps)) => positive("scene.trajectory.speed_mps", mps),
            (None, None) => Err(ConfigError::field(
                "scene.trajectory.speed_mph",
                "a speed is required",
            )),
        }
    }

    pub fn set_speed_mph(&mut self, mph: f64) {
        self.speed_mph = Some(mph);
        self.speed_mps = None;
    }
}

/// The tracked user's ground footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserSection {
    pub length_m: f64,
    pub width_m: f64,
}

impl Default for UserSection {
    fn default() -> Self {
        UserSection {
            length_m: 2.0,
            width_m: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub peak_dbm: f64,
    pub floor_dbm: f64,
    pub width_m: f64,
    pub blockage: BlockageModel,
    pub mos_anchors: MosMapping,
    /// Standard deviation of zero-mean Gaussian RSS jitter; 0 disables it.
    pub jitter_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            peak_dbm: -55.0,
            floor_dbm: -95.0,
            width_m: 45.0,
            blockage: BlockageModel::default(),
            mos_anchors: MosMapping::default(),
            jitter_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Proactive,
    Reactive,
    None,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Proactive => "proactive",
            StrategyKind::Reactive => "reactive",
            StrategyKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proactive" => Some(StrategyKind::Proactive),
            "reactive" => Some(StrategyKind::Reactive),
            "none" => Some(StrategyKind::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    /// Exact kinematics on the estimated position and speed.
    Analytic,
    /// The trained regression network from `paths.model`.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    /// Complete the handover at the optimal boundary (true) or trigger it
    /// there (false).
    pub complete_at_boundary: bool,
    /// Shifts the handover point along the lane; negative is earlier.
    pub trigger_offset_m: f64,
    /// Safety margin subtracted from the predicted time to blockage.
    pub guard_s: f64,
    pub predictor: PredictorKind,
    /// Distance before the blocked area at which the request is raised in
    /// the trigger table.
    pub request_distance_m: f64,
    pub reactive: ReactiveSection,
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection {
            kind: StrategyKind::Proactive,
            complete_at_boundary: true,
            trigger_offset_m: 0.0,
            guard_s: 0.01,
            predictor: PredictorKind::Analytic,
            request_distance_m: 22.0,
            reactive: ReactiveSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactiveSection {
    /// Defaults to 20 dB below the bell peak.
    pub threshold_dbm: Option<f64>,
    pub time_to_trigger_s: f64,
    pub reconnection_delay_s: f64,
}

impl Default for ReactiveSection {
    fn default() -> Self {
        ReactiveSection {
            threshold_dbm: None,
            time_to_trigger_s: 0.1,
            reconnection_delay_s: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionSection {
    pub sigma_px: f64,
    pub miss_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Stop early; by default the run ends when the user leaves the street.
    pub horizon_s: Option<f64>,
    pub sample_dt_s: f64,
    pub record_frames: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 42,
            horizon_s: None,
            sample_dt_s: 0.001,
            record_frames: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub model: String,
    pub out_dir: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            model: "out/model.bin".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub samples: usize,
    pub speeds_mph: Vec<f64>,
    pub split: [f64; 3],
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            samples: 10_000,
            speeds_mph: (1..=7).map(|k| 5.0 * k as f64).collect(),
            split: [0.8, 0.1, 0.1],
            epochs: t.epochs,
            batch_size: t.batch_size,
            hidden: t.hidden,
            activation: t.activation,
            learning_rate: t.adam.learning_rate,
            seed: t.seed,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            activation: self.activation,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            seed: self.seed,
        }
    }

    pub fn speeds_mps(&self) -> Vec<f64> {
        if self.speeds_mph.is_empty() {
            default_speed_set()
        } else {
            self.speeds_mph.iter().map(|&v| mph_to_mps(v)).collect()
        }
    }
}

/// Validated, ready-to-run form of a [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scene: Scene,
    pub rss: RssModel,
    pub blockage: BlockageModel,
    pub mos: MosMapping,
    pub jitter_db: f64,
    pub budget: TimingBudget,
    pub strategy: StrategySection,
    pub reactive: ReactiveConfig,
    pub detector: EmulatedDetector,
    pub user: UserSection,
    pub seed: u64,
    pub horizon_s: Option<f64>,
    pub sample_dt: Duration,
    pub record_frames: bool,
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::field(
            field,
            format!("must be positive, got {v}"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::field(
            field,
            format!("must be non-negative, got {v}"),
        ))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always representable as JSON");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let sc = &self.scene;
        if sc.sbs.is_empty() {
            return Err(ConfigError::field(
                "scene.sbs",
                "at least one SBS is required",
            ));
        }
        let sites = sc
            .sbs
            .iter()
            .map(|s| SbsSite {
                id: SbsId(s.id),
                pos: Point3 {
                    x: s.x,
                    y: s.y,
                    z: s.z,
                },
                camera: s.camera.clone(),
            })
            .collect::<Vec<_>>();
        let ob = &sc.obstacle;
        let obstacle = ob.enabled.then_some(Obstacle {
            class_label: ob.class,
            footprint: Footprint {
                x_min: ob.x_min,
                x_max: ob.x_max,
                y_min: ob.y_min,
                y_max: ob.y_max,
            },
            height_m: ob.height_m,
        });
        let tr = &sc.trajectory;
        let trajectory = Trajectory {
            y_lane: tr.y_lane,
            x_start: tr.x_start,
            direction: match tr.direction {
                DirectionName::Forward => Direction::Forward,
                DirectionName::Backward => Direction::Backward,
            },
            speed_mps: tr.speed()?,
        };
        let scene = Scene::new(
            sc.street_length_m,
            sc.street_width_m,
            sites,
            obstacle,
            trajectory,
        )
        .and_then(|s| s.with_blocked_region_start(sc.blocked_region_start_x))
        .map_err(|e| ConfigError::field("scene", e.to_string()))?;
        positive("scene.user.length_m", sc.user.length_m)?;
        positive("scene.user.width_m", sc.user.width_m)?;

        let ch = &self.channel;
        let bell = |x| Bell {
            peak_dbm: ch.peak_dbm,
            center_x: x,
            width_m: ch.width_m,
            floor_dbm: ch.floor_dbm,
        };
        let rss = RssModel::new(
            scene
                .sbs_list
                .iter()
                .map(|s| (s.id, bell(s.pos.x)))
                .collect(),
        )
        .map_err(|e| ConfigError::field("channel", e.to_string()))?;
        ch.blockage.validate().map_err(|e| {
            let field = if ch.blockage.extra_loss_db >= 20.0 {
                "channel.blockage.transition_width_m"
            } else {
                "channel.blockage.extra_loss_db"
            };
            ConfigError::field(field, e.to_string())
        })?;
        ch.mos_anchors
            .validate()
            .map_err(|e| ConfigError::field("channel.mos_anchors", e.to_string()))?;
        non_negative("channel.jitter_db", ch.jitter_db)?;

        let st = &self.strategy;
        non_negative("strategy.guard_s", st.guard_s)?;
        positive("strategy.request_distance_m", st.request_distance_m)?;
        if !st.trigger_offset_m.is_finite() {
            return Err(ConfigError::field(
                "strategy.trigger_offset_m",
                "must be finite",
            ));
        }
        let r = &st.reactive;
        let reactive = ReactiveConfig {
            threshold_dbm: r.threshold_dbm.unwrap_or(ch.peak_dbm - 20.0),
            time_to_trigger: secs(non_negative(
                "strategy.reactive.time_to_trigger_s",
                r.time_to_trigger_s,
            )?),
            reconnection_delay: secs(non_negative(
                "strategy.reactive.reconnection_delay_s",
                r.reconnection_delay_s,
            )?),
        };

        let p = &self.perception;
        non_negative("perception.sigma_px", p.sigma_px)?;
        if !(0.0..=1.0).contains(&p.miss_probability) {
            return Err(ConfigError::field(
                "perception.miss_probability",
                "must lie in [0, 1]",
            ));
        }

        let run = &self.run;
        let dt = positive("run.sample_dt_s", run.sample_dt_s)?;
        if secs(dt).is_zero() {
            return Err(ConfigError::field(
                "run.sample_dt_s",
                "must be at least 1 ns",
            ));
        }
        if let Some(h) = run.horizon_s {
            positive("run.horizon_s", h)?;
        }

        let t = &self.train;
        if t.split.iter().any(|f| !(*f >= 0.0)) || (t.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(ConfigError::field(
                "train.split",
                "fractions must be non-negative and sum to 1",
            ));
        }
        if t.speeds_mph.iter().any(|v| !(*v > 0.0)) {
            return Err(ConfigError::field(
                "train.speeds_mph",
                "speeds must be positive",
            ));
        }

        Ok(Scenario {
            scene,
            rss,
            blockage: ch.blockage,
            mos: ch.mos_anchors.clone(),
            jitter_db: ch.jitter_db,
            budget: self.budget,
            strategy: st.clone(),
            reactive,
            detector: EmulatedDetector {
                sigma_px: p.sigma_px,
                miss_probability: p.miss_probability,
            },
            user: sc.user.clone(),
            seed: run.seed,
            horizon_s: run.horizon_s,
            sample_dt: secs(dt),
            record_frames: run.record_frames,
        })
    }
}

impl Scenario {
    /// Strongest unblocked SBS at the start position.
    pub fn initial_serving(&self) -> SbsId {
        let x = self.scene.trajectory.x_start;
        self.best_sbs_at(x)
    }

    /// RSS from `sbs` at `x` including obstacle loss.
    pub fn link_rss(&self, sbs: SbsId, x: f64) -> f64 {
        let base = self.rss.bell(sbs).map_or(f64::NEG_INFINITY, |b| b.at(x));
        base - self.blockage.loss_at(x, self.shadow_of(sbs).as_ref())
    }

    pub fn shadow_of(&self, sbs: SbsId) -> Option<ShadowInterval> {
        self.scene.blocked_interval(sbs).ok().flatten()
    }

    /// Highest link RSS at `x`; ties go to the lowest id.
    pub fn best_sbs_at(&self, x: f64) -> SbsId {
        let mut ids: Vec<SbsId> = self.scene.sbs_list.iter().map(|s| s.id).collect();
        ids.sort();
        let mut best = (ids[0], self.link_rss(ids[0], x));
        for &id in &ids[1..] {
            let r = self.link_rss(id, x);
            if r > best.1 {
                best = (id, r);
            }
        }
        best.0
    }

    /// Lane edge of the initially serving SBS's blocked stretch, the label
    /// reference for training data.
    pub fn blocked_edge(&self) -> Option<f64> {
        self.shadow_of(self.initial_serving())
            .map(|s| s.entry_edge(self.scene.trajectory.direction))
    }

    pub fn analytic_predictor(&self) -> Option<AnalyticPredictor> {
        self.blocked_edge().map(|edge| AnalyticPredictor {
            blocked_edge_x: edge,
            direction: self.scene.trajectory.direction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_scenario() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let s = cfg.build().unwrap();
        assert_eq!(s.scene.trajectory.speed_mps, 13.4112);
        assert_eq!(s.budget, TimingBudget::default());
        assert_eq!(s.reactive.threshold_dbm, -75.0);
        assert_eq!(s.initial_serving(), SbsId(1));
        let sh = s.shadow_of(SbsId(1)).unwrap();
        assert!((sh.x_enter - 57.0).abs() < 1e-9 && (sh.x_exit - 84.0).abs() < 1e-9);
        assert!(s.shadow_of(SbsId(2)).is_none());
        assert_eq!(s.blocked_edge(), Some(sh.x_enter));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ScenarioConfig::from_toml("[strategy]\nguard_s = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("strategy.guard_s"), "{e}");
        let e = ScenarioConfig::from_toml("[scene.trajectory]\nspeed_mps = 3.0\n").unwrap_err();
        assert!(e.to_string().contains("scene.trajectory.speed_mps"), "{e}");
        let e = ScenarioConfig::from_toml("[run]\nsample_dt = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("sample_dt"), "{e}");
        let e = ScenarioConfig::from_toml("[channel.blockage]\nextra_loss_db = 5.0\n").unwrap_err();
        assert!(
            e.to_string().contains("channel.blockage.extra_loss_db"),
            "{e}"
        );
        let e = ScenarioConfig::from_toml("[strategy]\nkind = \"sideways\"\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
    }

    #[test]
    fn speed_in_either_unit() {
        let cfg = ScenarioConfig::from_toml("[scene.trajectory]\nspeed_mph = 15.0\n").unwrap();
        assert_eq!(cfg.build().unwrap().scene.trajectory.speed_mps, 6.7056);
        let mut cfg = ScenarioConfig::default();
        cfg.scene.trajectory.speed_mph = None;
        cfg.scene.trajectory.speed_mps = Some(10.0);
        assert_eq!(cfg.build().unwrap().scene.trajectory.speed_mps, 10.0);
    }

    #[test]
    fn hash_tracks_content() {
        let mut cfg = ScenarioConfig::default();
        let h = cfg.hash();
        cfg.run.seed += 1;
        assert_ne!(cfg.hash(), h);
    }

    #[test]
    fn best_sbs_honors_blockage() {
        let s = ScenarioConfig::default().build().unwrap();
        assert_eq!(s.best_sbs_at(10.0), SbsId(1));
        assert_eq!(s.best_sbs_at(70.0), SbsId(2));
        let unblocked = s.rss.bell(SbsId(1)).unwrap().at(70.0);
        assert!((s.link_rss(SbsId(1), 70.0) - (unblocked - 25.0)).abs() < 1e-12);
    }
}
