//! Fixtures shared by the benchmarks.

use drivescope_core::characterization::{simulate_follower, FollowSample, FollowerInit, IdmParams, PiecewiseAccel};
use drivescope_core::detection::{Detection, ObjectClass};
use drivescope_core::geometry::OrientedBox;
use drivescope_core::pointcloud::{Point, PointCloud};

/// Deterministic ring-structured sweep with a few box-shaped vehicles.
pub fn sweep(points_per_ring: usize, rings: u16) -> PointCloud {
    let mut pts = Vec::with_capacity(points_per_ring * rings as usize);
    for ring in 0..rings {
        let elev = (-15.0 + 2.0 * ring as f64).to_radians();
        for k in 0..points_per_ring {
            let az = k as f64 / points_per_ring as f64 * std::f64::consts::TAU;
            let r = if elev < 0.0 { (1.73 / -elev.tan()).min(60.0) } else { 45.0 };
            let (x, y) = (r * elev.cos() * az.cos(), r * elev.cos() * az.sin());
            pts.push(Point::new(x, y, (r * elev.sin()).max(-1.73), 20.0 + (k % 50) as f64, ring));
        }
    }
    PointCloud::new(pts, 1, "bench").expect("valid cloud")
}

pub fn detections(n: usize, t: f64) -> Vec<Detection> {
    (0..n)
        .map(|i| {
            let lane = (i % 3) as f64 * 3.5 - 3.5;
            let x = -30.0 + 12.0 * (i / 3) as f64 + (1.0 + 0.1 * i as f64) * t;
            Detection::new(ObjectClass::Car, OrientedBox::new(x, lane, 1.8, 4.5, 0.0), 0.9)
        })
        .collect()
}

pub fn follow_window(steps: usize) -> Vec<FollowSample> {
    let leader = PiecewiseAccel::speed_steps(12.0, &[24.0, 6.0, 26.0, 10.0], 6.0, 1.5);
    let init = FollowerInit { v: 20.0, s: 20.0, t0_us: 0 };
    simulate_follower(&IdmParams::new(2.0, 30.0, 1.5, 1.0, 2.0), &leader, init, 0.1, steps).expect("no collision")
}
