//! Received signal strength along the lane and its mapping to QoE.

use serde::{Deserialize, Serialize};

use crate::error::ChannelError;
use crate::scene::{SbsId, ShadowInterval};

/// Quadratic-in-dB bell around one SBS, floored far from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bell {
    pub peak_dbm: f64,
    pub center_x: f64,
    /// Distance from the center at which the bell reaches the floor.
    pub width_m: f64,
    pub floor_dbm: f64,
}

impl Bell {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.peak_dbm > self.floor_dbm) {
            return Err(ChannelError::Invalid("peak must exceed floor".into()));
        }
        if !(self.width_m > 0.0) {
            return Err(ChannelError::Invalid("bell width must be positive".into()));
        }
        Ok(())
    }

    /// Curvature in dB per square metre.
    pub fn curvature(&self) -> f64 {
        (self.peak_dbm - self.floor_dbm) / (self.width_m * self.width_m)
    }

    pub fn at(&self, x: f64) -> f64 {
        let d = x - self.center_x;
        (self.peak_dbm - self.curvature() * d * d).max(self.floor_dbm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssModel {
    cells: Vec<(SbsId, Bell)>,
}

impl RssModel {
    pub fn new(cells: Vec<(SbsId, Bell)>) -> Result<Self, ChannelError> {
        for (_, b) in &cells {
            b.validate()?;
        }
        Ok(RssModel { cells })
    }

    pub fn bell(&self, sbs: SbsId) -> Result<&Bell, ChannelError> {
        self.cells
            .iter()
            .find(|(id, _)| *id == sbs)
            .map(|(_, b)| b)
            .ok_or(ChannelError::UnknownSbs(sbs))
    }

    pub fn cells(&self) -> impl Iterator<Item = SbsId> + '_ {
        self.cells.iter().map(|(id, _)| *id)
    }
}

/// Unblocked RSS from `sbs` at lane position `x`, in dBm.
pub fn rss(model: &RssModel, sbs: SbsId, x: f64) -> Result<f64, ChannelError> {
    Ok(model.bell(sbs)?.at(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockageModel {
    pub extra_loss_db: f64,
    /// Ramp length inside each shadow edge over which the loss builds up.
    pub transition_width_m: f64,
}

impl Default for BlockageModel {
    fn default() -> Self {
        BlockageModel {
            extra_loss_db: 25.0,
            transition_width_m: 0.5,
        }
    }
}

impl BlockageModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.extra_loss_db >= 20.0) {
            return Err(ChannelError::Invalid(
                "blockage loss must be at least 20 dB".into(),
            ));
        }
        if !(self.transition_width_m >= 0.0) {
            return Err(ChannelError::Invalid(
                "transition width must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Loss applied at `x` for the given shadow, in dB.
    pub fn loss_at(&self, x: f64, shadow: Option<&ShadowInterval>) -> f64 {
        let Some(s) = shadow else { return 0.0 };
        if !s.contains(x) {
            return 0.0;
        }
        if self.transition_width_m == 0.0 {
            return self.extra_loss_db;
        }
        let depth = (x - s.x_enter).min(s.x_exit - x);
        self.extra_loss_db * (depth / self.transition_width_m).min(1.0)
    }
}

/// RSS after the obstacle's extra path loss.
pub fn apply_blockage(
    rssi_dbm: f64,
    x: f64,
    shadow: Option<&ShadowInterval>,
    blk: &BlockageModel,
) -> f64 {
    rssi_dbm - blk.loss_at(x, shadow)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssSample {
    pub t: f64,
    pub x: f64,
    pub sbs_id: SbsId,
    pub rssi_dbm: f64,
    pub blocked: bool,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Linear-power values relative to the strongest sample.
pub fn normalize(trace: &[RssSample]) -> Result<Vec<f64>, ChannelError> {
    normalize_dbm(trace.iter().map(|s| s.rssi_dbm))
}

pub fn normalize_dbm(
    values: impl IntoIterator<Item = f64> + Clone,
) -> Result<Vec<f64>, ChannelError> {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ChannelError::EmptyTrace);
    }
    Ok(values.into_iter().map(|v| dbm_to_mw(v - max)).collect())
}

/// Piecewise-linear RSSI to MOS map, clamped to `[1, 5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MosMapping {
    /// `(rssi_dbm, mos)` ordered by strictly decreasing RSSI.
    anchors: Vec<(f64, f64)>,
}

impl Default for MosMapping {
    fn default() -> Self {
        MosMapping {
            anchors: vec![
                (-60.0, 5.0),
                (-70.0, 4.5),
                (-78.0, 4.0),
                (-85.0, 3.0),
                (-92.0, 2.0),
                (-100.0, 1.0),
            ],
        }
    }
}

impl MosMapping {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self, ChannelError> {
        let m = MosMapping { anchors };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.anchors.is_empty() {
            return Err(ChannelError::Invalid(
                "MOS mapping needs at least one anchor".into(),
            ));
        }
        for w in self.anchors.windows(2) {
            if !(w[0].0 > w[1].0) {
                return Err(ChannelError::Invalid(
                    "MOS anchors must have strictly decreasing RSSI".into(),
                ));
            }
            if w[0].1 < w[1].1 {
                return Err(ChannelError::Invalid(
                    "MOS must not increase as RSSI decreases".into(),
                ));
            }
        }
        if self.anchors.iter().any(|(_, m)| !(1.0..=5.0).contains(m)) {
            return Err(ChannelError::Invalid(
                "MOS anchors must lie in [1, 5]".into(),
            ));
        }
        Ok(())
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }
}

pub fn mos(mapping: &MosMapping, rssi_dbm: f64) -> f64 {
    let a = &mapping.anchors;
    let (first, last) = (a[0], a[a.len() - 1]);
    let v = if rssi_dbm >= first.0 {
        first.1
    } else if rssi_dbm <= last.0 {
        last.1
    } else {
        let i = a
            .iter()
            .position(|&(r, _)| r < rssi_dbm)
            .expect("bracketed");
        let (hi, lo) = (a[i - 1], a[i]);
        lo.1 + (hi.1 - lo.1) * (rssi_dbm - lo.0) / (hi.0 - lo.0)
    };
    v.clamp(1.0, 5.0)
}
