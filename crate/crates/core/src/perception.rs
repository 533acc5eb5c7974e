//! Emulated camera front end.
//!
//! Objects are projected onto a flat image whose width spans
//! `coverage_width_m` metres of street starting at `segment_start_x`. Boxes
//! are quantized to whole pixels the way a detector reports them, and
//! optionally perturbed with Gaussian corner noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::PerceptionError;
use crate::scene::SbsId;

/// Frame rate of every camera.
pub const FRAMES_PER_SECOND: f64 = 26.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub image_width_px: u32,
    pub image_height_px: u32,
    pub fov_deg: f64,
    pub coverage_width_m: f64,
    /// Street depth mapped onto the image rows.
    pub coverage_depth_m: f64,
    /// World x imaged at pixel column 0.
    pub segment_start_x: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            image_width_px: 640,
            image_height_px: 480,
            fov_deg: 100.0,
            coverage_width_m: 30.0,
            coverage_depth_m: 15.0,
            segment_start_x: 0.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.image_width_px == 0 || self.image_height_px == 0 {
            return Err(PerceptionError::InvalidCamera(
                "image dimensions must be positive".into(),
            ));
        }
        if !(self.coverage_width_m > 0.0) || !(self.coverage_depth_m > 0.0) {
            return Err(PerceptionError::InvalidCamera(
                "coverage must be positive".into(),
            ));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(PerceptionError::InvalidCamera(
                "field of view must be in (0, 180)".into(),
            ));
        }
        Ok(())
    }

    /// Pixels per metre along the image width.
    pub fn px_per_m(&self) -> f64 {
        self.image_width_px as f64 / self.coverage_width_m
    }

    fn rows_per_m(&self) -> f64 {
        self.image_height_px as f64 / self.coverage_depth_m
    }

    pub fn segment_end_x(&self) -> f64 {
        self.segment_start_x + self.coverage_width_m
    }

    pub fn covers(&self, x: f64) -> bool {
        x >= self.segment_start_x && x <= self.segment_end_x()
    }

    /// World coordinates of an image point.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.segment_start_x + displacement_m(self, col),
            row / self.rows_per_m(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Bus,
    Truck,
    Person,
}

impl ObjectClass {
    /// Classes that can shadow a mmWave beam.
    pub fn is_obstacle(self) -> bool {
        matches!(self, ObjectClass::Bus | ObjectClass::Truck)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Bus => "bus",
            ObjectClass::Truck => "truck",
            ObjectClass::Person => "person",
        }
    }
}

/// Ground-truth object handed to the emulated detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub class_label: ObjectClass,
    pub center_x: f64,
    pub center_y: f64,
    /// Extent along the street (image width direction).
    pub width_m: f64,
    /// Extent across the street (image height direction).
    pub depth_m: f64,
}

/// Pixel box, upper-left `(x1, y1)` to lower-right `(x2, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x1 as f64 + self.x2 as f64),
            0.5 * (self.y1 as f64 + self.y2 as f64),
        )
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: ObjectClass,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    /// Box clipped by the image edge; its center is biased.
    pub fn touches_border(&self, camera: &CameraModel) -> bool {
        self.bbox.x1 == 0 || self.bbox.x2 >= camera.image_width_px
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub camera_id: SbsId,
    pub seq_no: u64,
    pub timestamp: f64,
    pub detections: Vec<Detection>,
}

/// Projects `obj` into `camera`, quantizing to whole pixels.
///
/// Returns `None` when the object center falls outside the imaged segment.
/// Boxes partly outside the image are clipped to it.
pub fn project(camera: &CameraModel, obj: &SceneObject) -> Option<Detection> {
    project_with(camera, obj, || 0.0)
}

/// [`project`] with zero-mean Gaussian noise of `sigma_px` on every corner.
pub fn project_noisy<R: Rng + ?Sized>(
    camera: &CameraModel,
    obj: &SceneObject,
    sigma_px: f64,
    rng: &mut R,
) -> Option<Detection> {
    if sigma_px > 0.0 {
        let normal = Normal::new(0.0, sigma_px).expect("sigma is positive and finite");
        project_with(camera, obj, || normal.sample(rng))
    } else {
        project_with(camera, obj, || 0.0)
    }
}

fn project_with(
    camera: &CameraModel,
    obj: &SceneObject,
    mut jitter: impl FnMut() -> f64,
) -> Option<Detection> {
    if !camera.covers(obj.center_x) {
        return None;
    }
    let sx = camera.px_per_m();
    let sy = camera.rows_per_m();
    let cx = (obj.center_x - camera.segment_start_x) * sx;
    let cy = obj.center_y * sy;
    let hw = 0.5 * obj.width_m * sx;
    let hh = 0.5 * obj.depth_m * sy;
    let mut corners = [cx - hw, cy - hh, cx + hw, cy + hh];
    for c in corners.iter_mut() {
        *c += jitter();
    }
    let w = camera.image_width_px as f64;
    let h = camera.image_height_px as f64;
    let q = |v: f64, max: f64| v.round().clamp(0.0, max) as u32;
    let bbox = BBox {
        x1: q(corners[0], w),
        y1: q(corners[1], h),
        x2: q(corners[2], w),
        y2: q(corners[3], h),
    };
    if bbox.x1 >= bbox.x2 || bbox.y1 >= bbox.y2 {
        return None;
    }
    Some(Detection {
        class_label: obj.class_label,
        bbox,
        confidence: 1.0,
    })
}

/// Metres travelled for a displacement of `delta_px` pixels along the image width.
pub fn displacement_m(camera: &CameraModel, delta_px: f64) -> f64 {
    camera.coverage_width_m / camera.image_width_px as f64 * delta_px
}

/// Distance over time.
pub fn estimate_speed(distance_m: f64, dt_s: f64) -> Result<f64, PerceptionError> {
    if !(dt_s > 0.0) {
        return Err(PerceptionError::InvalidInterval(dt_s));
    }
    Ok(distance_m / dt_s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    pub object_id: u32,
    pub class_label: ObjectClass,
    pub last_center_px: (f64, f64),
    pub last_pos_m: (f64, f64),
    pub speed_mps: f64,
    /// Sign of the last x displacement: +1, -1, or 0 when unknown/stationary.
    pub heading: f64,
    pub last_update: f64,
    /// Number of detections folded into the track.
    pub updates: u32,
}

impl Track {
    /// Starts a track from its first detection. Speed is unknown (0) until
    /// a second frame arrives.
    pub fn new(object_id: u32, det: &Detection, camera: &CameraModel, timestamp: f64) -> Self {
        let center = det.bbox.center();
        Track {
            object_id,
            class_label: det.class_label,
            last_center_px: center,
            last_pos_m: camera.pixel_to_world(center.0, center.1),
            speed_mps: 0.0,
            heading: 0.0,
            last_update: timestamp,
            updates: 1,
        }
    }

    pub fn has_speed(&self) -> bool {
        self.updates >= 2
    }
}

/// Folds a new detection into `track`. Speed is taken from this and the
/// previous frame only.
pub fn update_track(
    track: &Track,
    det: &Detection,
    camera: &CameraModel,
    timestamp: f64,
) -> Result<Track, PerceptionError> {
    if det.class_label != track.class_label {
        return Err(PerceptionError::ClassMismatch {
            track: track.class_label.as_str().into(),
            detection: det.class_label.as_str().into(),
        });
    }
    if !(timestamp > track.last_update) {
        return Err(PerceptionError::StaleDetection {
            now: timestamp,
            last: track.last_update,
        });
    }
    let center = det.bbox.center();
    let dx_px = center.0 - track.last_center_px.0;
    let distance = displacement_m(camera, dx_px.abs());
    let speed = estimate_speed(distance, timestamp - track.last_update)?;
    Ok(Track {
        object_id: track.object_id,
        class_label: track.class_label,
        last_center_px: center,
        last_pos_m: camera.pixel_to_world(center.0, center.1),
        speed_mps: speed,
        heading: if dx_px > 0.0 {
            1.0
        } else if dx_px < 0.0 {
            -1.0
        } else {
            0.0
        },
        last_update: timestamp,
        updates: track.updates + 1,
    })
}

/// Detector stand-in: ground-truth projection plus noise and random misses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmulatedDetector {
    pub sigma_px: f64,
    pub miss_probability: f64,
}

impl EmulatedDetector {
    pub fn capture<R: Rng + ?Sized>(
        &self,
        camera: &CameraModel,
        camera_id: SbsId,
        seq_no: u64,
        timestamp: f64,
        objects: &[SceneObject],
        rng: &mut R,
    ) -> Frame {
        let detections = objects
            .iter()
            .filter_map(|o| {
                if self.miss_probability > 0.0 && rng.random::<f64>() < self.miss_probability {
                    return None;
                }
                project_noisy(camera, o, self.sigma_px, rng)
            })
            .collect();
        Frame {
            camera_id,
            seq_no,
            timestamp,
            detections,
        }
    }
}
