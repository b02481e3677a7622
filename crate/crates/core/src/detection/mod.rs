//! Object detection over top-view maps.
//!
//! Detectors are pluggable through [`Detector`]. The crate ships an
//! [`OracleDetector`] driven by known boxes; a remote client lives in the
//! service crate. [`detect_full_azimuth`] covers all 360 degrees with a
//! forward-only detector by running it on the front half and on the rear half
//! turned around.

mod azimuth;
mod oracle;

pub use azimuth::{consolidate, detect_full_azimuth, FullAzimuthConfig};
pub use oracle::{OracleConfig, OracleDetector};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bevmap::BevMap;
use crate::geometry::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Van,
    Truck,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Car, ObjectClass::Van, ObjectClass::Truck];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Van => "van",
            ObjectClass::Truck => "truck",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown class `{s}`"))
    }
}

/// Oriented box with class and confidence. Serializes flat as
/// `{cls, cx, cy, w, l, yaw, score}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cls: ObjectClass,
    #[serde(flatten)]
    pub bbox: OrientedBox,
    pub score: f64,
}

impl Detection {
    pub fn new(cls: ObjectClass, bbox: OrientedBox, score: f64) -> Self {
        Self { cls, bbox, score }
    }

    pub fn is_valid(&self) -> bool {
        self.bbox.is_valid() && (0.0..=1.0).contains(&self.score)
    }
}

/// Turns a detection about the map origin; a half turn maps (x, y) to (-x, -y).
pub fn rotate_detection(det: &Detection, angle: f64) -> Detection {
    Detection {
        bbox: det.bbox.rotated_about_origin(angle),
        ..*det
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectErrorKind {
    Timeout,
    /// The detector rejected the request payload.
    BadRequest,
    /// The detector failed while processing a valid request.
    DetectorFailure,
    Transport,
    /// The response could not be decoded.
    Protocol,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("detection failed for frame `{frame_id}` ({kind:?}): {message}")]
pub struct DetectError {
    pub frame_id: String,
    pub kind: DetectErrorKind,
    pub message: String,
}

impl DetectError {
    pub fn new(frame_id: &str, kind: DetectErrorKind, message: impl Into<String>) -> Self {
        Self {
            frame_id: frame_id.to_string(),
            kind,
            message: message.into(),
        }
    }
}

/// BevMap in, boxes in meters in that map's frame out.
///
/// Implementations must be deterministic for a fixed configuration and safe
/// to call from several threads.
pub trait Detector: Send + Sync {
    fn detect(&self, map: &BevMap) -> Result<Vec<Detection>, DetectError>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&self, map: &BevMap) -> Result<Vec<Detection>, DetectError> {
        (**self).detect(map)
    }
}

impl<D: Detector + ?Sized> Detector for std::sync::Arc<D> {
    fn detect(&self, map: &BevMap) -> Result<Vec<Detection>, DetectError> {
        (**self).detect(map)
    }
}

/// Runs a detector and checks what it returns.
pub fn detect<D: Detector + ?Sized>(map: &BevMap, detector: &D) -> Result<Vec<Detection>, DetectError> {
    if map.height.len() != map.rows * map.cols || map.cols != map.config.cells_per_side {
        return Err(DetectError::new(
            &map.frame_id,
            DetectErrorKind::BadRequest,
            "map channels do not match grid dimensions",
        ));
    }
    let dets = detector.detect(map)?;
    if let Some(bad) = dets.iter().find(|d| !d.is_valid()) {
        return Err(DetectError::new(
            &map.frame_id,
            DetectErrorKind::Protocol,
            format!("detector returned an invalid box: {bad:?}"),
        ));
    }
    Ok(dets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn det(cx: f64, cy: f64, yaw: f64) -> Detection {
        Detection::new(ObjectClass::Car, OrientedBox::new(cx, cy, 1.8, 4.5, yaw), 0.8)
    }

    #[test]
    fn half_turn_of_detection() {
        let r = rotate_detection(&det(10.0, 2.0, 0.0), PI);
        assert!((r.bbox.cx + 10.0).abs() < 1e-12 && (r.bbox.cy + 2.0).abs() < 1e-12);
        assert!((r.bbox.yaw - PI).abs() < 1e-12);
        assert_eq!((r.bbox.w, r.bbox.l, r.score, r.cls), (1.8, 4.5, 0.8, ObjectClass::Car));
    }

    #[test]
    fn half_turn_is_involution() {
        let d = det(-3.0, 7.5, 1.1);
        let back = rotate_detection(&rotate_detection(&d, PI), PI);
        assert!((back.bbox.cx - d.bbox.cx).abs() < 1e-12);
        assert!((back.bbox.cy - d.bbox.cy).abs() < 1e-12);
        assert!((back.bbox.yaw - d.bbox.yaw).abs() < 1e-12);
    }

    #[test]
    fn yaw_wraps_after_half_turn() {
        let r = rotate_detection(&det(0.0, 0.0, 3.0 * PI / 4.0), PI);
        assert!((r.bbox.yaw + PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn class_parsing() {
        assert_eq!("Truck".parse::<ObjectClass>().unwrap(), ObjectClass::Truck);
        assert!("bike".parse::<ObjectClass>().is_err());
    }
}
