//! Ground-surface removal: random-sample consensus plane fit, or a plain
//! height cut.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GroundMethod {
    Plane,
    /// Drop everything with z below the given height.
    ZThreshold { z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundConfig {
    pub method: GroundMethod,
    pub inlier_threshold_m: f64,
    pub max_normal_tilt_deg: f64,
    pub iterations: usize,
    /// A plane must explain at least this share of the cloud to count as ground.
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            method: GroundMethod::Plane,
            inlier_threshold_m: 0.2,
            max_normal_tilt_deg: 15.0,
            iterations: 100,
            min_inlier_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundRemoval {
    pub cloud: PointCloud,
    /// `(nx, ny, nz, d)` with unit normal pointing up, `n·p + d = 0`.
    pub plane: Option<[f64; 4]>,
    /// Plane mode found no admissible plane; `cloud` is the unchanged input.
    pub no_plane: bool,
}

pub fn signed_distance(plane: &[f64; 4], p: &Point) -> f64 {
    plane[0] * p.x + plane[1] * p.y + plane[2] * p.z + plane[3]
}

pub fn remove_ground(cloud: &PointCloud, cfg: &GroundConfig) -> GroundRemoval {
    match cfg.method {
        GroundMethod::ZThreshold { z } => GroundRemoval {
            cloud: cloud.with_points(cloud.points.iter().filter(|p| p.z >= z).copied().collect()),
            plane: None,
            no_plane: false,
        },
        GroundMethod::Plane => match fit_plane(&cloud.points, cfg) {
            Some(plane) => {
                let kept = cloud
                    .points
                    .iter()
                    .filter(|p| signed_distance(&plane, p).abs() > cfg.inlier_threshold_m)
                    .copied()
                    .collect();
                GroundRemoval {
                    cloud: cloud.with_points(kept),
                    plane: Some(plane),
                    no_plane: false,
                }
            }
            None => GroundRemoval {
                cloud: cloud.clone(),
                plane: None,
                no_plane: true,
            },
        },
    }
}

fn plane_through(a: &Point, b: &Point, c: &Point) -> Option<[f64; 4]> {
    let pa = Vector3::new(a.x, a.y, a.z);
    let pb = Vector3::new(b.x, b.y, b.z);
    let pc = Vector3::new(c.x, c.y, c.z);
    let n = (pb - pa).cross(&(pc - pa));
    let norm = n.norm();
    if norm < 1e-12 {
        return None;
    }
    Some(oriented(n / norm, &pa))
}

fn oriented(n: Vector3<f64>, on_plane: &Vector3<f64>) -> [f64; 4] {
    let n = if n.z < 0.0 { -n } else { n };
    [n.x, n.y, n.z, -n.dot(on_plane)]
}

fn count_inliers(points: &[Point], plane: &[f64; 4], thresh: f64) -> usize {
    points
        .iter()
        .filter(|p| signed_distance(plane, p).abs() <= thresh)
        .count()
}

fn fit_plane(points: &[Point], cfg: &GroundConfig) -> Option<[f64; 4]> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let min_nz = cfg.max_normal_tilt_deg.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<([f64; 4], usize)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let Some(plane) = plane_through(&points[i], &points[j], &points[k]) else {
            continue;
        };
        if plane[2] < min_nz {
            continue;
        }
        let count = count_inliers(points, &plane, cfg.inlier_threshold_m);
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let (plane, count) = best?;
    if (count as f64) < cfg.min_inlier_fraction * n as f64 {
        return None;
    }

    // least-squares refinement over the consensus set
    let inliers: Vec<&Point> = points
        .iter()
        .filter(|p| signed_distance(&plane, p).abs() <= cfg.inlier_threshold_m)
        .collect();
    let refined = refit(&inliers).filter(|r| r[2] >= min_nz);
    match refined {
        Some(r) if count_inliers(points, &r, cfg.inlier_threshold_m) >= count => Some(r),
        _ => Some(plane),
    }
}

fn refit(points: &[&Point]) -> Option<[f64; 4]> {
    if points.len() < 3 {
        return None;
    }
    let m = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + Vector3::new(p.x, p.y, p.z))
        / m;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::new(p.x, p.y, p.z) - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal: Vector3<f64> = eig.eigenvectors.column(idx).into_owned();
    Some(oriented(normal.normalize(), &centroid))
}
