//! Synthetic drive generator.
//!
//! The ego vehicle follows an optional scripted leader under the IDM; other
//! vehicles move at constant speed in fixed lanes. Every frame is rendered by
//! casting the sensor's rings against a flat ground plane and the vehicle
//! boxes. All randomness (range and intensity noise, the physiology signal)
//! is seeded; trajectories do not depend on the seed.

use std::path::Path;

use drivescope_core::characterization::{
    simulate_follower, FollowSample, FollowerInit, IdmParams, LeaderProfile, PiecewiseAccel,
};
use drivescope_core::detection::{Detection, ObjectClass};
use drivescope_core::geometry::OrientedBox;
use drivescope_core::pointcloud::{write_csv, Point, PointCloud, SensorProfile};
use drivescope_core::scene::{DynamicsSeries, EgoSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::io::{self, TruthRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Puck,
    Hdl64e,
}

impl SensorKind {
    pub fn profile(self) -> SensorProfile {
        match self {
            SensorKind::Puck => SensorProfile::puck(),
            SensorKind::Hdl64e => SensorProfile::hdl64e(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgoSpec {
    pub length_m: f64,
    pub width_m: f64,
    pub initial_speed_mps: f64,
    pub idm: IdmParams,
}

impl Default for EgoSpec {
    fn default() -> Self {
        Self {
            length_m: 4.5,
            width_m: 1.8,
            initial_speed_mps: 22.0,
            idm: IdmParams::new(2.0, 30.0, 1.5, 1.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeaderSpec {
    /// Bumper-to-bumper gap at the first frame.
    pub initial_gap_m: f64,
    pub initial_speed_mps: f64,
    /// `[duration s, acceleration m/s^2]` segments, then cruise.
    pub segments: Vec<[f64; 2]>,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub cls: ObjectClass,
}

impl Default for LeaderSpec {
    fn default() -> Self {
        Self {
            initial_gap_m: 20.0,
            initial_speed_mps: 20.0,
            segments: vec![[1.5, -3.0], [1.0, 0.0], [3.0, 2.5]],
            length_m: 4.5,
            width_m: 1.8,
            height_m: 1.5,
            cls: ObjectClass::Car,
        }
    }
}

impl LeaderSpec {
    fn profile(&self) -> PiecewiseAccel {
        PiecewiseAccel {
            initial_speed: self.initial_speed_mps,
            segments: self.segments.iter().map(|s| (s[0], s[1])).collect(),
        }
    }
}

/// Constant-speed vehicle; `x0_m` is its center relative to the ego center
/// at the first frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub x0_m: f64,
    pub cy_m: f64,
    pub speed_mps: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_width")]
    pub width_m: f64,
    #[serde(default = "default_height")]
    pub height_m: f64,
    #[serde(default = "default_cls")]
    pub cls: ObjectClass,
}

fn default_length() -> f64 {
    4.5
}
fn default_width() -> f64 {
    1.8
}
fn default_height() -> f64 {
    1.5
}
fn default_cls() -> ObjectClass {
    ObjectClass::Car
}

/// Synthetic stress signal: `base + gain / gap + noise`, sampled per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysiologySpec {
    pub base: f64,
    pub gain: f64,
    pub noise_sigma: f64,
}

impl Default for PhysiologySpec {
    fn default() -> Self {
        Self {
            base: 0.3,
            gain: 5.0,
            noise_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub frames: usize,
    pub frame_rate_hz: f64,
    pub start_us: i64,
    pub seed: u64,
    pub sensor: SensorKind,
    pub azimuth_step_deg: f64,
    pub max_range_m: f64,
    pub sensor_height_m: f64,
    pub range_noise_m: f64,
    pub intensity_noise: f64,
    pub ground: bool,
    pub ego: EgoSpec,
    pub leader: Option<LeaderSpec>,
    pub others: Vec<VehicleSpec>,
    pub physiology: PhysiologySpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            frames: 100,
            frame_rate_hz: 10.0,
            start_us: 1_600_000_000_000_000,
            seed: 0,
            sensor: SensorKind::Puck,
            azimuth_step_deg: 0.8,
            max_range_m: 60.0,
            sensor_height_m: 1.73,
            range_noise_m: 0.01,
            intensity_noise: 3.0,
            ground: true,
            ego: EgoSpec::default(),
            leader: Some(LeaderSpec::default()),
            others: vec![
                VehicleSpec {
                    x0_m: 12.0,
                    cy_m: 3.5,
                    speed_mps: 19.0,
                    length_m: 4.5,
                    width_m: 1.8,
                    height_m: 1.5,
                    cls: ObjectClass::Car,
                },
                VehicleSpec {
                    x0_m: -14.0,
                    cy_m: -3.5,
                    speed_mps: 18.5,
                    length_m: 5.2,
                    width_m: 2.0,
                    height_m: 2.0,
                    cls: ObjectClass::Van,
                },
                VehicleSpec {
                    x0_m: -25.0,
                    cy_m: 0.0,
                    speed_mps: 17.0,
                    length_m: 9.0,
                    width_m: 2.5,
                    height_m: 3.0,
                    cls: ObjectClass::Truck,
                },
            ],
            physiology: PhysiologySpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn frame_period_s(&self) -> f64 {
        1.0 / self.frame_rate_hz
    }

    pub fn timestamp_us(&self, k: usize) -> i64 {
        self.start_us + (k as f64 * 1e6 / self.frame_rate_hz).round() as i64
    }

    pub fn frame_id(k: usize) -> String {
        format!("frame_{k:04}")
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.frames == 0 || !(self.frame_rate_hz > 0.0) {
            return Err(CliError::config("frames and frame_rate_hz must be positive"));
        }
        if self.start_us <= 0 {
            return Err(CliError::config("start_us must be positive"));
        }
        if !(self.azimuth_step_deg > 0.0) || !(self.max_range_m > 0.0) || !(self.sensor_height_m > 0.0) {
            return Err(CliError::config("sensor geometry must be positive"));
        }
        if !self.ego.idm.is_positive() || !(self.ego.length_m > 0.0) {
            return Err(CliError::config("ego parameters must be positive"));
        }
        Ok(())
    }
}

/// Leader used when the scenario has none: far enough ahead that the IDM
/// interaction term vanishes.
struct OpenRoad;

impl LeaderProfile for OpenRoad {
    fn position(&self, t: f64) -> f64 {
        1e9 + 100.0 * t
    }

    fn speed(&self, _: f64) -> f64 {
        100.0
    }
}

/// State of every vehicle at every frame, ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub timestamps_us: Vec<i64>,
    /// Ego follower samples, one per frame. `s` is meaningless without a leader.
    pub ego: Vec<FollowSample>,
    /// Truth boxes per frame, leader first with id 1.
    pub boxes: Vec<Vec<TruthRow>>,
    pub heights: Vec<f64>,
}

fn overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    drivescope_core::geometry::intersection_area(a, b) > 1e-9
}

/// Integrates the scripted motion. Independent of the seed.
pub fn trajectories(spec: &ScenarioSpec) -> Result<Trajectories, CliError> {
    spec.validate()?;
    let dt = spec.frame_period_s();
    let init = FollowerInit {
        v: spec.ego.initial_speed_mps,
        s: spec.leader.as_ref().map(|l| l.initial_gap_m).unwrap_or(1e9),
        t0_us: spec.start_us,
    };
    let ego = match &spec.leader {
        Some(l) => simulate_follower(&spec.ego.idm, &l.profile(), init, dt, spec.frames),
        None => simulate_follower(&spec.ego.idm, &OpenRoad, init, dt, spec.frames),
    }
    .map_err(|e| CliError::config(format!("scripted trajectories collide: {e}")))?;

    // ego travel since the first frame, from the leader position and the gap
    let travel: Vec<f64> = match &spec.leader {
        Some(l) => {
            let p = l.profile();
            ego.iter()
                .enumerate()
                .map(|(k, e)| p.position(k as f64 * dt) - e.s + ego[0].s)
                .collect()
        }
        None => {
            let mut x = vec![0.0];
            for k in 1..ego.len() {
                x.push(x[k - 1] + 0.5 * (ego[k - 1].v + ego[k].v) * dt);
            }
            x
        }
    };

    let ego_box = OrientedBox::new(0.0, 0.0, spec.ego.width_m, spec.ego.length_m, 0.0);
    let mut boxes = Vec::with_capacity(spec.frames);
    let mut heights = Vec::new();
    if let Some(l) = &spec.leader {
        heights.push(l.height_m);
    }
    heights.extend(spec.others.iter().map(|o| o.height_m));
    for (k, e) in ego.iter().enumerate() {
        let t = k as f64 * dt;
        let frame_id = ScenarioSpec::frame_id(k);
        let timestamp_us = e.timestamp_us;
        let mut rows = Vec::new();
        if let Some(l) = &spec.leader {
            let cx = e.s + 0.5 * (spec.ego.length_m + l.length_m);
            rows.push(TruthRow {
                frame_id: frame_id.clone(),
                timestamp_us,
                id: 1,
                detection: Detection::new(l.cls, OrientedBox::new(cx, 0.0, l.width_m, l.length_m, 0.0), 1.0),
                vx: l.profile().speed(t) - e.v,
                vy: 0.0,
            });
        }
        let first_other = rows.len() as u64 + 1;
        for (i, o) in spec.others.iter().enumerate() {
            let cx = o.x0_m + o.speed_mps * t - travel[k];
            rows.push(TruthRow {
                frame_id: frame_id.clone(),
                timestamp_us,
                id: first_other + i as u64,
                detection: Detection::new(o.cls, OrientedBox::new(cx, o.cy_m, o.width_m, o.length_m, 0.0), 1.0),
                vx: o.speed_mps - e.v,
                vy: 0.0,
            });
        }
        for (i, a) in rows.iter().enumerate() {
            if overlap(&a.detection.bbox, &ego_box) {
                return Err(CliError::config(format!(
                    "vehicle {} collides with the ego vehicle at {frame_id}",
                    a.id
                )));
            }
            for b in &rows[i + 1..] {
                if overlap(&a.detection.bbox, &b.detection.bbox) {
                    return Err(CliError::config(format!(
                        "vehicles {} and {} collide at {frame_id}",
                        a.id, b.id
                    )));
                }
            }
        }
        boxes.push(rows);
    }
    Ok(Trajectories {
        timestamps_us: ego.iter().map(|e| e.timestamp_us).collect(),
        ego,
        boxes,
        heights,
    })
}

/// Distance along a unit ray from the origin to an upright box, if hit.
fn ray_box(dir: [f64; 3], b: &OrientedBox, z_lo: f64, z_hi: f64) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    // ray in box coordinates: u along the heading, v to the left
    let o = [-(c * b.cx + s * b.cy), s * b.cx - c * b.cy, 0.0];
    let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
    let lo = [-0.5 * b.l, -0.5 * b.w, z_lo];
    let hi = [0.5 * b.l, 0.5 * b.w, z_hi];
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-12 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return None;
            }
            continue;
        }
        let (a, bb) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
        t0 = t0.max(a.min(bb));
        t1 = t1.min(a.max(bb));
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

fn frame_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Renders one frame. Vehicle `heights[i]` belongs to `rows[i]`.
pub fn render_frame(spec: &ScenarioSpec, k: usize, rows: &[TruthRow], heights: &[f64]) -> PointCloud {
    let profile = spec.sensor.profile();
    let mut rng = frame_rng(spec.seed, k);
    let range_noise = Normal::new(0.0, spec.range_noise_m.max(0.0)).expect("finite sigma");
    let intensity_noise = Normal::new(0.0, spec.intensity_noise.max(0.0)).expect("finite sigma");
    let ground_z = -spec.sensor_height_m;
    let n_az = (360.0 / spec.azimuth_step_deg).round() as usize;
    let mut points = Vec::new();
    for (ring, elev) in profile.channel_angles.iter().enumerate() {
        let (se, ce) = elev.to_radians().sin_cos();
        for j in 0..n_az {
            let (sa, ca) = (j as f64 * spec.azimuth_step_deg).to_radians().sin_cos();
            let dir = [ce * ca, ce * sa, se];
            let mut hit: Option<(f64, f64)> = None;
            if spec.ground && se < 0.0 {
                hit = Some((ground_z / se, 20.0));
            }
            for (r, h) in rows.iter().zip(heights) {
                if let Some(t) = ray_box(dir, &r.detection.bbox, ground_z, ground_z + h) {
                    if hit.is_none_or(|(best, _)| t < best) {
                        hit = Some((t, 120.0));
                    }
                }
            }
            // draw noise for every ray so the stream does not depend on hits
            let dr = range_noise.sample(&mut rng);
            let di = intensity_noise.sample(&mut rng);
            let Some((t, base)) = hit else { continue };
            if t * ce > spec.max_range_m {
                continue;
            }
            let t = t + dr;
            let intensity = (base + di).round().clamp(0.0, 255.0);
            points.push(Point::new(t * dir[0], t * dir[1], t * dir[2], intensity, ring as u16));
        }
    }
    PointCloud::new(points, spec.timestamp_us(k), ScenarioSpec::frame_id(k)).expect("valid frame header")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub frames: usize,
    pub vehicles: usize,
    pub points: usize,
}

/// Writes a complete scenario into `out_dir`:
///
/// * `scenario.toml` the spec used
/// * `frames/index.csv` and one point CSV per frame
/// * `dynamics.csv` ego speed and acceleration
/// * `truth.csv` ground-truth boxes per frame
/// * `follow_truth.csv` exact ego/leader observables
/// * `idm_truth.json` the ego's IDM parameters
/// * `physiology.csv` synthetic stress signal
/// * `pipeline.toml` a ready-to-run pipeline config over these files
pub fn generate_scenario(spec: &ScenarioSpec, out_dir: &Path) -> Result<ScenarioSummary, CliError> {
    let traj = trajectories(spec)?;
    let stage = |e: String| CliError::stage("gen-scenario", None, e);
    let mut index = Vec::with_capacity(spec.frames);
    let mut points = 0;
    for (k, rows) in traj.boxes.iter().enumerate() {
        let cloud = render_frame(spec, k, rows, &traj.heights);
        points += cloud.len();
        let file = format!("{}.csv", cloud.frame_id);
        let mut buf = Vec::new();
        write_csv(&cloud, &mut buf).map_err(|e| stage(e.to_string()))?;
        io::write(&out_dir.join("frames").join(&file), buf).map_err(stage)?;
        index.push((cloud.frame_id.clone(), cloud.timestamp_us, file));
    }
    io::write(&out_dir.join("frames/index.csv"), io::frame_index_csv(&index)).map_err(stage)?;

    let dynamics = DynamicsSeries::new(
        traj.ego
            .iter()
            .map(|e| EgoSample {
                accel: Some(e.a_obs),
                ..EgoSample::new(e.timestamp_us, e.v)
            })
            .collect(),
    )
    .map_err(|e| stage(e.to_string()))?;
    io::write(&out_dir.join("dynamics.csv"), dynamics.to_csv()).map_err(stage)?;

    let rows: Vec<TruthRow> = traj.boxes.iter().flatten().cloned().collect();
    io::write(&out_dir.join("truth.csv"), io::truth_csv(&rows)).map_err(stage)?;
    if spec.leader.is_some() {
        io::write(&out_dir.join("follow_truth.csv"), io::follow_csv(&traj.ego)).map_err(stage)?;
    }
    io::write(
        &out_dir.join("idm_truth.json"),
        serde_json::to_string_pretty(&spec.ego.idm).expect("serializable"),
    )
    .map_err(stage)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5ee_d0f5_7e55);
    let noise = Normal::new(0.0, spec.physiology.noise_sigma.max(0.0)).expect("finite sigma");
    let mut phys = String::from("timestamp_us,value\n");
    for e in &traj.ego {
        let load = if spec.leader.is_some() { spec.physiology.gain / e.s } else { 0.0 };
        let v = spec.physiology.base + load + noise.sample(&mut rng);
        phys.push_str(&format!("{},{}\n", e.timestamp_us, v));
    }
    io::write(&out_dir.join("physiology.csv"), phys).map_err(stage)?;

    io::write(
        &out_dir.join("scenario.toml"),
        toml::to_string(spec).map_err(|e| stage(e.to_string()))?,
    )
    .map_err(stage)?;
    let cfg = PipelineConfig::for_scenario(spec);
    io::write(
        &out_dir.join("pipeline.toml"),
        toml::to_string(&cfg).map_err(|e| stage(e.to_string()))?,
    )
    .map_err(stage)?;

    Ok(ScenarioSummary {
        frames: spec.frames,
        vehicles: traj.heights.len(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use drivescope_core::characterization::idm_accel;

    #[test]
    fn ego_dynamics_satisfy_the_idm() {
        let spec = ScenarioSpec {
            leader: Some(LeaderSpec {
                segments: vec![],
                initial_speed_mps: 15.0,
                ..LeaderSpec::default()
            }),
            others: vec![],
            ..ScenarioSpec::default()
        };
        let traj = trajectories(&spec).unwrap();
        for e in &traj.ego {
            let a = idm_accel(&spec.ego.idm, e.v, e.s, e.dv).unwrap();
            assert!((a - e.a_obs).abs() <= 1e-6);
        }
        // truth rows agree with the follower samples
        for (rows, e) in traj.boxes.iter().zip(&traj.ego) {
            let leader = &rows[0];
            assert!((leader.detection.bbox.cx - e.s - 4.5).abs() < 1e-9);
            assert!((leader.vx + e.dv).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_changes_noise_not_truth() {
        let a = ScenarioSpec {
            frames: 3,
            ..ScenarioSpec::default()
        };
        let b = ScenarioSpec { seed: 9, ..a.clone() };
        let (ta, tb) = (trajectories(&a).unwrap(), trajectories(&b).unwrap());
        assert_eq!(ta, tb);
        let ca = render_frame(&a, 1, &ta.boxes[1], &ta.heights);
        let cb = render_frame(&b, 1, &tb.boxes[1], &tb.heights);
        assert_eq!(ca.len(), cb.len());
        assert_ne!(ca.points, cb.points);
        assert_eq!(ca.points, render_frame(&a, 1, &ta.boxes[1], &ta.heights).points);
    }

    #[test]
    fn empty_road_has_only_ground() {
        let spec = ScenarioSpec {
            frames: 2,
            leader: None,
            others: vec![],
            range_noise_m: 0.0,
            ..ScenarioSpec::default()
        };
        let traj = trajectories(&spec).unwrap();
        assert!(traj.boxes.iter().all(Vec::is_empty));
        let cloud = render_frame(&spec, 0, &traj.boxes[0], &traj.heights);
        assert!(!cloud.is_empty());
        assert!(cloud.points.iter().all(|p| (p.z + spec.sensor_height_m).abs() < 1e-9));
        // the ego keeps accelerating toward its desired speed
        assert!(traj.ego[1].v > traj.ego[0].v);
    }

    #[test]
    fn rays_stop_at_vehicles() {
        let spec = ScenarioSpec {
            frames: 1,
            range_noise_m: 0.0,
            others: vec![],
            ..ScenarioSpec::default()
        };
        let traj = trajectories(&spec).unwrap();
        let cloud = render_frame(&spec, 0, &traj.boxes[0], &traj.heights);
        let leader = traj.boxes[0][0].detection.bbox;
        let on_leader: Vec<&Point> = cloud.points.iter().filter(|p| p.z > -spec.sensor_height_m + 1e-6).collect();
        assert!(on_leader.len() >= 5, "{}", on_leader.len());
        for p in on_leader {
            // rear face of the leader
            assert!((p.x - (leader.cx - 0.5 * leader.l)).abs() < 1e-9, "{p:?}");
            assert!(p.y.abs() <= 0.5 * leader.w + 1e-9);
        }
    }

    #[test]
    fn scripted_collision_is_a_config_error() {
        let spec = ScenarioSpec {
            frames: 50,
            others: vec![VehicleSpec {
                x0_m: 30.0,
                cy_m: 0.0,
                speed_mps: 0.0,
                length_m: 4.5,
                width_m: 1.8,
                height_m: 1.5,
                cls: ObjectClass::Car,
            }],
            ..ScenarioSpec::default()
        };
        assert!(matches!(trajectories(&spec), Err(CliError::Config(_))));
    }

    #[test]
    fn ray_box_hits_front_face() {
        let b = OrientedBox::new(10.0, 0.0, 2.0, 4.0, 0.0);
        assert!((ray_box([1.0, 0.0, 0.0], &b, -1.0, 1.0).unwrap() - 8.0).abs() < 1e-12);
        assert!(ray_box([-1.0, 0.0, 0.0], &b, -1.0, 1.0).is_none());
        assert!(ray_box([1.0, 0.0, 0.0], &b, 0.5, 1.0).is_none());
        let turned = OrientedBox::new(10.0, 0.0, 2.0, 4.0, std::f64::consts::FRAC_PI_2);
        assert!((ray_box([1.0, 0.0, 0.0], &turned, -1.0, 1.0).unwrap() - 9.0).abs() < 1e-12);
    }
}
