//! KITTI object labels.
//!
//! Label boxes live in the rectified camera frame (x right, y down, z
//! forward, location at the bottom face center). Containment tests convert
//! them into the ego frame with the nominal axis permutation; per-drive
//! calibration offsets are not applied.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{Point, PointCloud, PointCloudError};
use crate::geometry::{normalize_angle, OrientedBox};

/// Label types kept after decimation.
pub const VEHICLE_TYPES: [&str; 3] = ["car", "van", "truck"];

/// Upright 3D box in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3d {
    pub center: [f64; 3],
    /// (height, width, length)
    pub dims: [f64; 3],
    pub yaw: f64,
}

impl Box3d {
    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.center[0], self.center[1], self.dims[1], self.dims[2], self.yaw)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (p.z - self.center[2]).abs() <= 0.5 * self.dims[0] && self.footprint().contains(p.x, p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiLabel {
    pub object_type: String,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    /// left, top, right, bottom in image pixels
    pub bbox2d: [f64; 4],
    /// (h, w, l) meters
    pub dimensions: [f64; 3],
    /// camera-frame bottom center
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiLabel {
    pub fn is_vehicle(&self) -> bool {
        VEHICLE_TYPES
            .iter()
            .any(|t| t.eq_ignore_ascii_case(&self.object_type))
    }

    pub fn ego_box(&self) -> Box3d {
        let [h, w, l] = self.dimensions;
        let [cx, cy, cz] = self.location;
        Box3d {
            center: [cz, -cx, -cy + 0.5 * h],
            dims: [h, w, l],
            yaw: normalize_angle(-self.rotation_y - FRAC_PI_2),
        }
    }

    /// Inverse of [`KittiLabel::ego_box`], for writing fixtures.
    pub fn from_ego_box(object_type: &str, b: &Box3d) -> Self {
        let [h, w, l] = b.dims;
        Self {
            object_type: object_type.to_string(),
            truncated: 0.0,
            occluded: 0,
            alpha: 0.0,
            bbox2d: [0.0; 4],
            dimensions: [h, w, l],
            location: [-b.center[1], -(b.center[2] - 0.5 * h), b.center[0]],
            rotation_y: normalize_angle(-b.yaw - FRAC_PI_2),
            score: None,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            self.object_type,
            self.truncated,
            self.occluded,
            self.alpha,
            self.bbox2d[0],
            self.bbox2d[1],
            self.bbox2d[2],
            self.bbox2d[3],
            self.dimensions[0],
            self.dimensions[1],
            self.dimensions[2],
            self.location[0],
            self.location[1],
            self.location[2],
            self.rotation_y
        );
        if let Some(score) = self.score {
            s.push_str(&format!(" {score}"));
        }
        s
    }
}

/// Parses KITTI label text: one object per line, 15 whitespace-separated
/// fields, optionally followed by a detection score.
pub fn parse_kitti_labels(text: &str) -> Result<Vec<KittiLabel>, PointCloudError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(PointCloudError::Parse {
                line,
                msg: format!("expected 15 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64, PointCloudError> {
            fields[i].parse().map_err(|_| PointCloudError::Parse {
                line,
                msg: format!("field {} `{}` is not a number", i + 1, fields[i]),
            })
        };
        let label = KittiLabel {
            object_type: fields[0].to_string(),
            truncated: num(1)?,
            occluded: num(2)? as i32,
            alpha: num(3)?,
            bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
            dimensions: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        };
        // DontCare rows carry -1 placeholders
        if label.object_type != "DontCare" && label.dimensions.iter().any(|d| *d <= 0.0) {
            return Err(PointCloudError::Schema(format!(
                "line {line}: dimensions must be positive"
            )));
        }
        out.push(label);
    }
    Ok(out)
}

/// Keeps vehicle labels whose box still holds at least `min_points` points
/// of the decimated cloud.
pub fn decimate_labels(
    labels: &[KittiLabel],
    decimated: &PointCloud,
    min_points: usize,
) -> Vec<KittiLabel> {
    assert!(min_points >= 1, "min_points must be at least 1");
    labels
        .iter()
        .filter(|l| l.is_vehicle())
        .filter(|l| {
            let b = l.ego_box();
            decimated
                .points
                .iter()
                .filter(|p| b.contains(p))
                .take(min_points)
                .count()
                >= min_points
        })
        .cloned()
        .collect()
}
