//! Street geometry, user kinematics and obstacle shadows.
//!
//! Occlusion is computed in the ground plane: an SBS loses line of sight to a
//! lane point when the straight segment between them crosses the obstacle
//! footprint. Heights are carried as metadata only.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SceneError;
use crate::perception::CameraModel;

pub const MPS_PER_MPH: f64 = 0.44704;

/// Converts miles per hour to metres per second.
pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPS_PER_MPH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SbsId(pub u32);

impl fmt::Display for SbsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsSite {
    pub id: SbsId,
    pub pos: Point3,
    pub camera: CameraModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleClass {
    Bus,
    Truck,
    Other,
}

/// Axis-aligned rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Footprint {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn depth(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub class_label: ObstacleClass,
    pub footprint: Footprint,
    pub height_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn from_sign(sign: i32) -> Option<Self> {
        match sign {
            1 => Some(Direction::Forward),
            -1 => Some(Direction::Backward),
            _ => None,
        }
    }
}

/// Constant-velocity straight-lane motion of the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub y_lane: f64,
    pub x_start: f64,
    pub direction: Direction,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    /// The unclamped position would lie outside the street.
    pub at_end: bool,
}

/// Stretch of the lane, ordered in x (`x_enter < x_exit`), on which the
/// obstacle occludes a given SBS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowInterval {
    pub sbs_id: SbsId,
    pub x_enter: f64,
    pub x_exit: f64,
}

impl ShadowInterval {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_enter && x <= self.x_exit
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.x_enter + self.x_exit)
    }

    pub fn len(&self) -> f64 {
        self.x_exit - self.x_enter
    }

    /// The edge a user travelling in `direction` reaches first.
    pub fn entry_edge(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Forward => self.x_enter,
            Direction::Backward => self.x_exit,
        }
    }
}

/// Everything the server knows about the covered street.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub street_length_m: f64,
    pub street_width_m: f64,
    pub sbs_list: Vec<SbsSite>,
    pub obstacle: Option<Obstacle>,
    pub trajectory: Trajectory,
    /// Replaces geometric shadow casting for every shadowed SBS: the lane is
    /// blocked from this x onward in the direction of travel.
    pub blocked_region_start_x: Option<f64>,
}

impl Scene {
    pub fn new(
        street_length_m: f64,
        street_width_m: f64,
        sbs_list: Vec<SbsSite>,
        obstacle: Option<Obstacle>,
        trajectory: Trajectory,
    ) -> Result<Self, SceneError> {
        let scene = Scene {
            street_length_m,
            street_width_m,
            sbs_list,
            obstacle,
            trajectory,
            blocked_region_start_x: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_blocked_region_start(mut self, x: Option<f64>) -> Result<Self, SceneError> {
        self.blocked_region_start_x = x;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if !(self.street_length_m > 0.0) || !(self.street_width_m > 0.0) {
            return bad("street dimensions must be positive".into());
        }
        let inside_x = |x: f64| (0.0..=self.street_length_m).contains(&x);
        let inside_y = |y: f64| (0.0..=self.street_width_m).contains(&y);
        for (i, s) in self.sbs_list.iter().enumerate() {
            if self.sbs_list[..i].iter().any(|o| o.id == s.id) {
                return bad(format!("duplicate SBS id {}", s.id));
            }
            if !inside_x(s.pos.x) || !inside_y(s.pos.y) {
                return bad(format!("SBS {} lies outside the street", s.id));
            }
            if !(s.pos.z > 0.0) {
                return bad(format!("SBS {} must be mounted above ground", s.id));
            }
            s.camera
                .validate()
                .map_err(|e| SceneError::Invalid(format!("SBS {} camera: {e}", s.id)))?;
        }
        if let Some(ob) = &self.obstacle {
            let f = &ob.footprint;
            if !(f.x_min < f.x_max) || !(f.y_min < f.y_max) {
                return bad("obstacle footprint must have positive extent".into());
            }
            if !inside_x(f.x_min) || !inside_x(f.x_max) || !inside_y(f.y_min) || !inside_y(f.y_max)
            {
                return bad("obstacle footprint lies outside the street".into());
            }
            if !(ob.height_m > 0.0) {
                return bad("obstacle height must be positive".into());
            }
        }
        let t = &self.trajectory;
        if !inside_y(t.y_lane) {
            return bad("lane lies outside the street".into());
        }
        if !inside_x(t.x_start) {
            return bad("trajectory starts outside the street".into());
        }
        if !(t.speed_mps > 0.0) || !t.speed_mps.is_finite() {
            return bad("speed must be positive".into());
        }
        if let Some(x) = self.blocked_region_start_x {
            if !inside_x(x) {
                return bad("blocked_region_start_x lies outside the street".into());
            }
        }
        Ok(())
    }

    pub fn sbs(&self, id: SbsId) -> Result<&SbsSite, SceneError> {
        self.sbs_list
            .iter()
            .find(|s| s.id == id)
            .ok_or(SceneError::UnknownSbs(id))
    }

    /// Blocked lane stretch for `sbs_id`, honoring `blocked_region_start_x`.
    pub fn blocked_interval(&self, sbs_id: SbsId) -> Result<Option<ShadowInterval>, SceneError> {
        let geometric = shadow_interval(self, sbs_id)?;
        let (Some(shadow), Some(start)) = (geometric, self.blocked_region_start_x) else {
            return Ok(geometric);
        };
        let (x_enter, x_exit) = match self.trajectory.direction {
            Direction::Forward => (start, self.street_length_m),
            Direction::Backward => (0.0, start),
        };
        if x_enter < x_exit {
            Ok(Some(ShadowInterval {
                sbs_id: shadow.sbs_id,
                x_enter,
                x_exit,
            }))
        } else {
            Ok(None)
        }
    }

    /// Time at which the user reaches the street end (or leaves it).
    pub fn exit_time_s(&self) -> f64 {
        let t = &self.trajectory;
        let remaining = match t.direction {
            Direction::Forward => self.street_length_m - t.x_start,
            Direction::Backward => t.x_start,
        };
        remaining / t.speed_mps
    }
}

/// User position at `t` seconds, clamped to the street.
pub fn position_at(scene: &Scene, t: f64) -> Position {
    let traj = &scene.trajectory;
    let x = traj.x_start + traj.direction.sign() * traj.speed_mps * t.max(0.0);
    let clamped = x.clamp(0.0, scene.street_length_m);
    Position {
        x: clamped,
        y: traj.y_lane,
        at_end: clamped != x,
    }
}

/// Lane interval on which the obstacle occludes `sbs_id`, or `None`.
///
/// A lane point `q` is shadowed iff segment `p -> q` meets the footprint,
/// i.e. iff `q = p + t (c - p)` for some footprint point `c` and `t >= 1`.
/// That set is convex, so its trace on the lane is an interval. Its ends are
/// reached at extreme x of the footprint slice lying between the SBS and the
/// lane, scaled by the largest / smallest ray stretch factor.
pub fn shadow_interval(scene: &Scene, sbs_id: SbsId) -> Result<Option<ShadowInterval>, SceneError> {
    let sbs = scene.sbs(sbs_id)?;
    let Some(ob) = &scene.obstacle else {
        return Ok(None);
    };
    let (px, py) = (sbs.pos.x, sbs.pos.y);
    let lane = scene.trajectory.y_lane;
    let f = ob.footprint;

    let (lo, hi) = if lane == py {
        // SBS on the lane line: the segment runs along the lane itself.
        if !(f.y_min <= lane && lane <= f.y_max) {
            return Ok(None);
        }
        if px < f.x_min {
            (f.x_min, f64::INFINITY)
        } else if px > f.x_max {
            (f64::NEG_INFINITY, f.x_max)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    } else {
        // Work in a frame where the lane is above the SBS.
        let s = (lane - py).signum();
        let dl = (lane - py) * s;
        let (ya, yb) = {
            let a = (f.y_min - py) * s;
            let b = (f.y_max - py) * s;
            (a.min(b), a.max(b))
        };
        // Clip to the strip (0, dl] between SBS and lane.
        let ya = ya.max(0.0);
        let yb = yb.min(dl);
        if ya > yb || yb <= 0.0 {
            return Ok(None);
        }
        // Ray stretch factor dl / dy over dy in [ya, yb].
        let f_min = dl / yb;
        let f_max = if ya > 0.0 { dl / ya } else { f64::INFINITY };
        let project = |dx: f64, factor_if_neg: f64, factor_if_pos: f64| -> f64 {
            if dx < 0.0 {
                px + dx * factor_if_neg
            } else if dx > 0.0 {
                px + dx * factor_if_pos
            } else {
                px
            }
        };
        let lo = project(f.x_min - px, f_max, f_min);
        let hi = project(f.x_max - px, f_min, f_max);
        (lo, hi)
    };

    let x_enter = lo.max(0.0);
    let x_exit = hi.min(scene.street_length_m);
    if x_enter < x_exit {
        Ok(Some(ShadowInterval {
            sbs_id,
            x_enter,
            x_exit,
        }))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn site(id: u32, x: f64, y: f64) -> SbsSite {
        SbsSite {
            id: SbsId(id),
            pos: Point3 { x, y, z: 6.0 },
            camera: CameraModel::default(),
        }
    }

    fn scene_with(sbs: Vec<SbsSite>, fp: Option<Footprint>) -> Scene {
        Scene::new(
            90.0,
            15.0,
            sbs,
            fp.map(|footprint| Obstacle {
                class_label: ObstacleClass::Bus,
                footprint,
                height_m: 3.0,
            }),
            Trajectory {
                y_lane: 9.0,
                x_start: 0.0,
                direction: Direction::Forward,
                speed_mps: mph_to_mps(30.0),
            },
        )
        .unwrap()
    }

    #[test]
    fn mph_conversion() {
        assert_eq!(mph_to_mps(30.0), 13.4112);
        assert_eq!(mph_to_mps(0.0), 0.0);
        assert_eq!(mph_to_mps(5.0), 2.2352);
    }

    #[test]
    fn position_follows_constant_velocity() {
        let mut sc = scene_with(vec![site(1, 30.0, 0.0)], None);
        let p = position_at(&sc, 0.0);
        assert_eq!((p.x, p.y, p.at_end), (0.0, 9.0, false));
        let p = position_at(&sc, 1.0);
        assert_eq!((p.x, p.y), (13.4112, 9.0));

        sc.trajectory.x_start = 46.39;
        let p = position_at(&sc, 1.6404);
        // 46.39 + 13.4112 * 1.6404 = 46.39 + 21.99973248
        assert!((p.x - 68.3897).abs() < 1e-4, "{}", p.x);

        let p = position_at(&sc, 100.0);
        assert_eq!(p.x, 90.0);
        assert!(p.at_end);
    }

    #[test]
    fn backward_motion_clamps_at_zero() {
        let mut sc = scene_with(vec![site(1, 30.0, 0.0)], None);
        sc.trajectory.x_start = 10.0;
        sc.trajectory.direction = Direction::Backward;
        assert_eq!(position_at(&sc, 0.5).x, 10.0 - 0.5 * 13.4112);
        assert!(position_at(&sc, 2.0).at_end);
    }

    #[test]
    fn no_obstacle_no_shadow() {
        let sc = scene_with(vec![site(1, 30.0, 0.0)], None);
        assert_eq!(shadow_interval(&sc, SbsId(1)).unwrap(), None);
    }

    #[test]
    fn shadow_through_near_lane_bus() {
        // SBS at (30, 0), bus x 54..66, y 6..8, lane 9.
        let sc = scene_with(
            vec![site(1, 30.0, 0.0)],
            Some(Footprint {
                x_min: 54.0,
                x_max: 66.0,
                y_min: 6.0,
                y_max: 8.0,
            }),
        );
        let s = shadow_interval(&sc, SbsId(1)).unwrap().unwrap();
        assert_eq!(s.x_enter, 30.0 + 24.0 * 9.0 / 8.0);
        assert_eq!(s.x_exit, 30.0 + 36.0 * 9.0 / 6.0);
    }

    #[test]
    fn symmetric_obstacle_gives_symmetric_shadow() {
        let sc = scene_with(
            vec![site(1, 45.0, 0.0)],
            Some(Footprint {
                x_min: 43.0,
                x_max: 47.0,
                y_min: 4.0,
                y_max: 6.0,
            }),
        );
        let s = shadow_interval(&sc, SbsId(1)).unwrap().unwrap();
        assert!((s.midpoint() - 45.0).abs() < 1e-12);
        assert!((s.x_enter - (45.0 - 2.0 * 9.0 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn obstacle_behind_lane_casts_nothing() {
        let sc = scene_with(
            vec![site(1, 30.0, 15.0)],
            Some(Footprint {
                x_min: 54.0,
                x_max: 66.0,
                y_min: 6.0,
                y_max: 8.0,
            }),
        );
        assert_eq!(shadow_interval(&sc, SbsId(1)).unwrap(), None);
    }

    #[test]
    fn unknown_sbs_is_an_error() {
        let sc = scene_with(vec![site(1, 30.0, 0.0)], None);
        assert_eq!(
            shadow_interval(&sc, SbsId(9)),
            Err(SceneError::UnknownSbs(SbsId(9)))
        );
    }

    #[test]
    fn blocked_region_override_replaces_geometry() {
        let sc = scene_with(
            vec![site(1, 30.0, 0.0), site(2, 60.0, 15.0)],
            Some(Footprint {
                x_min: 54.0,
                x_max: 66.0,
                y_min: 6.0,
                y_max: 8.0,
            }),
        )
        .with_blocked_region_start(Some(70.0))
        .unwrap();
        let b = sc.blocked_interval(SbsId(1)).unwrap().unwrap();
        assert_eq!((b.x_enter, b.x_exit), (70.0, 90.0));
        assert_eq!(sc.blocked_interval(SbsId(2)).unwrap(), None);
    }

    #[test]
    fn validation_rejects_bad_geometry() {
        let traj = Trajectory {
            y_lane: 9.0,
            x_start: 0.0,
            direction: Direction::Forward,
            speed_mps: 1.0,
        };
        assert!(Scene::new(0.0, 15.0, vec![], None, traj).is_err());
        assert!(Scene::new(
            90.0,
            15.0,
            vec![site(1, 1.0, 0.0), site(1, 2.0, 0.0)],
            None,
            traj
        )
        .is_err());
        assert!(Scene::new(90.0, 15.0, vec![site(1, 100.0, 0.0)], None, traj).is_err());
        let mut t2 = traj;
        t2.speed_mps = 0.0;
        assert!(Scene::new(90.0, 15.0, vec![], None, t2).is_err());
        t2 = traj;
        t2.y_lane = 20.0;
        assert!(Scene::new(90.0, 15.0, vec![], None, t2).is_err());
    }
}
