use serde::{Deserialize, Serialize};

use super::{Point, PointCloud};

/// Rotates every point about the z axis. Elevation, z, intensity and ring
/// are unaffected.
pub fn rotate_z(cloud: &PointCloud, angle_rad: f64) -> PointCloud {
    let (s, c) = angle_rad.sin_cos();
    let points = cloud
        .points
        .iter()
        .map(|p| Point {
            x: c * p.x - s * p.y,
            y: s * p.x + c * p.y,
            ..*p
        })
        .collect();
    cloud.with_points(points)
}

/// Closed axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        assert!(
            (0..3).all(|i| min[i] < max[i]),
            "box bounds must satisfy min < max on every axis"
        );
        Self { min, max }
    }

    pub fn contains(&self, p: &Point) -> bool {
        let v = [p.x, p.y, p.z];
        (0..3).all(|i| self.min[i] <= v[i] && v[i] <= self.max[i])
    }

    /// Overlap of two boxes, `None` when they do not overlap with positive volume.
    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for i in 0..3 {
            min[i] = self.min[i].max(other.min[i]);
            max[i] = self.max[i].min(other.max[i]);
            if min[i] >= max[i] {
                return None;
            }
        }
        Some(Aabb { min, max })
    }
}

pub fn crop(cloud: &PointCloud, bounds: &Aabb) -> PointCloud {
    cloud.with_points(cloud.points.iter().filter(|p| bounds.contains(p)).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            pts.iter().map(|&[x, y, z]| Point::new(x, y, z, 1.0, 0)).collect(),
            1,
            "t",
        )
        .unwrap()
    }

    #[test]
    fn quarter_turn() {
        let out = rotate_z(&cloud(&[[1.0, 0.0, 0.0]]), FRAC_PI_2);
        let p = out.points[0];
        assert!(p.x.abs() < 1e-9 && (p.y - 1.0).abs() < 1e-9 && p.z == 0.0);
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let c = cloud(&[[1.0, 2.0, 3.0], [-4.0, 0.5, -1.0]]);
        let back = rotate_z(&rotate_z(&c, PI), PI);
        for (a, b) in c.points.iter().zip(&back.points) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && a.z == b.z);
        }
    }

    #[test]
    fn crop_drops_far_points() {
        let c = cloud(&[[100.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        let b = Aabb::new([-40.0, -40.0, -5.0], [40.0, 40.0, 5.0]);
        let out = crop(&c, &b);
        assert_eq!(out.len(), 1);
        assert_eq!(out.points[0].x, 1.0);
    }

    #[test]
    fn crop_is_inclusive_on_bounds() {
        let c = cloud(&[[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]]);
        let b = Aabb::new([-1.0; 3], [1.0; 3]);
        assert_eq!(crop(&c, &b), c);
    }
}
