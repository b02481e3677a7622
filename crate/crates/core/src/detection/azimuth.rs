use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{detect, rotate_detection, DetectError, DetectErrorKind, Detection, Detector};
use crate::bevmap::{make_frgb, split_halves, GridConfig};
use crate::geometry::iou_oriented;
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullAzimuthConfig {
    pub grid: GridConfig,
    pub iou_thresh: f64,
    /// Extra depth past the x = 0 seam included in each half.
    pub seam_margin_m: f64,
}

impl Default for FullAzimuthConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            iou_thresh: 0.3,
            seam_margin_m: 0.0,
        }
    }
}

/// Merges front detections with rear detections already turned back into the
/// ego frame. Overlaps at or above `iou_thresh` keep the higher score; the
/// result is ordered by descending score, front before rear on ties.
pub fn consolidate(front: &[Detection], rear: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    assert!(
        iou_thresh > 0.0 && iou_thresh < 1.0,
        "iou threshold must lie in (0, 1)"
    );
    let mut all: Vec<Detection> = front.iter().chain(rear).copied().collect();
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::with_capacity(all.len());
    for d in all {
        let dup = kept
            .iter()
            .any(|k| iou_oriented(&k.bbox, &d.bbox).unwrap_or(0.0) >= iou_thresh);
        if !dup {
            kept.push(d);
        }
    }
    kept
}

/// Two-pass 360 degree detection with a forward-facing detector.
pub fn detect_full_azimuth<D: Detector + ?Sized>(
    cloud: &PointCloud,
    detector: &D,
    cfg: &FullAzimuthConfig,
) -> Result<Vec<Detection>, DetectError> {
    let map = make_frgb(cloud, &cfg.grid)
        .map_err(|e| DetectError::new(&cloud.frame_id, DetectErrorKind::BadRequest, e.to_string()))?;
    let margin = (cfg.seam_margin_m.max(0.0) / cfg.grid.cell_size()).ceil() as usize;
    let (front, rear) = split_halves(&map, margin)
        .map_err(|e| DetectError::new(&cloud.frame_id, DetectErrorKind::BadRequest, e.to_string()))?;
    let front_dets = detect(&front, detector)?;
    let rear_dets: Vec<Detection> = detect(&rear, detector)?
        .iter()
        .map(|d| rotate_detection(d, PI))
        .collect();
    Ok(consolidate(&front_dets, &rear_dets, cfg.iou_thresh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{ObjectClass, OracleConfig, OracleDetector};
    use crate::geometry::OrientedBox;
    use crate::pointcloud::Point;

    fn det(cx: f64, cy: f64, score: f64) -> Detection {
        Detection::new(ObjectClass::Car, OrientedBox::new(cx, cy, 2.0, 2.0, 0.0), score)
    }

    fn cfg() -> FullAzimuthConfig {
        FullAzimuthConfig {
            grid: GridConfig {
                extent_m: 40.0,
                cells_per_side: 320,
                z_min: -2.0,
                z_max: 1.25,
            },
            ..Default::default()
        }
    }

    fn boxy_cloud(b: &OrientedBox) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..=30 {
            for j in 0..=10 {
                let u = -0.5 * b.l + b.l * i as f64 / 30.0;
                let v = -0.5 * b.w + b.w * j as f64 / 10.0;
                let (s, c) = b.yaw.sin_cos();
                pts.push(Point::new(b.cx + c * u - s * v, b.cy + s * u + c * v, -0.7, 90.0, 1));
            }
        }
        PointCloud::new(pts, 1, "s").unwrap()
    }

    #[test]
    fn duplicates_collapse() {
        let out = consolidate(&[det(5.0, 5.0, 0.7)], &[det(5.0, 5.0, 0.7)], 0.3);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn distant_objects_survive() {
        let out = consolidate(&[det(5.0, 5.0, 0.7)], &[det(-20.0, 5.0, 0.9)], 0.3);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn higher_score_wins_overlap() {
        // 2x2 squares offset by 2/3 m: IoU = (4/3 * 2) / (8 - 8/3) = 0.5
        let a = det(0.0, 0.0, 0.6);
        let b = det(2.0 / 3.0, 0.0, 0.9);
        let iou = iou_oriented(&a.bbox, &b.bbox).unwrap();
        assert!((iou - 0.5).abs() < 1e-12);
        let out = consolidate(&[a], &[b], 0.3);
        assert_eq!(out, vec![b]);
    }

    #[test]
    fn rear_object_is_found_in_ego_frame() {
        let truth = Detection::new(ObjectClass::Car, OrientedBox::new(-15.0, 3.0, 1.8, 4.5, 0.2), 1.0);
        let oracle = OracleDetector::fixed(vec![truth], OracleConfig::default());
        let out = detect_full_azimuth(&boxy_cloud(&truth.bbox), &oracle, &cfg()).unwrap();
        assert_eq!(out.len(), 1);
        let d = out[0].bbox;
        assert!((d.cx + 15.0).abs() < 1e-9 && (d.cy - 3.0).abs() < 1e-9);
        assert!((d.yaw - 0.2).abs() < 1e-9);
    }

    #[test]
    fn seam_straddler_is_reported_once() {
        let truth = Detection::new(ObjectClass::Car, OrientedBox::new(0.3, -6.0, 1.8, 4.5, 0.0), 1.0);
        let oracle = OracleDetector::fixed(vec![truth], OracleConfig::default());
        let cloud = boxy_cloud(&truth.bbox);
        let map = make_frgb(&cloud, &cfg().grid).unwrap();
        let (front, rear) = split_halves(&map, 0).unwrap();
        assert_eq!(oracle.detect(&front).unwrap().len(), 1);
        assert_eq!(oracle.detect(&rear).unwrap().len(), 1);
        let out = detect_full_azimuth(&cloud, &oracle, &cfg()).unwrap();
        assert_eq!(out.len(), 1);
    }
}
