//! Ego dynamics, lane assignment and leader/follower extraction.
//!
//! Lanes are straight strips parallel to the ego x axis; there is no road
//! geometry input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracking::TrackedBox;

/// Smallest reported bumper-to-bumper gap, meters.
pub const MIN_GAP_M: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("time {t_us} outside series range [{first}, {last}]")]
    OutOfRange { t_us: i64, first: i64, last: i64 },
    #[error("empty series")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoSample {
    pub timestamp_us: i64,
    pub speed: f64,
    pub accel: Option<f64>,
    pub steer_deg: Option<f64>,
    pub throttle: Option<f64>,
    pub brake: Option<f64>,
}

impl EgoSample {
    pub fn new(timestamp_us: i64, speed: f64) -> Self {
        Self {
            timestamp_us,
            speed,
            accel: None,
            steer_deg: None,
            throttle: None,
            brake: None,
        }
    }
}

/// Time-sorted ego samples with unique timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DynamicsSeries {
    samples: Vec<EgoSample>,
}

pub const DYNAMICS_HEADER: &str = "timestamp_us,speed_mps,accel_mps2,steer_deg,throttle,brake";

/// Parses `timestamp_us,speed_mps,accel_mps2,steer_deg,throttle,brake`.
/// Only the first two columns are required; optional cells may be blank.
pub fn parse_dynamics(bytes: &[u8]) -> Result<DynamicsSeries, SceneError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| SceneError::Schema(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = col("timestamp_us").ok_or_else(|| SceneError::Schema("missing `timestamp_us`".into()))?;
    let speed_col = col("speed_mps").ok_or_else(|| SceneError::Schema("missing `speed_mps`".into()))?;
    let optional = ["accel_mps2", "steer_deg", "throttle", "brake"].map(col);

    let mut samples = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| SceneError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let parse_f = |c: usize| -> Result<Option<f64>, SceneError> {
            match rec.get(c).map(str::trim) {
                None | Some("") => Ok(None),
                Some(raw) => raw.parse().map(Some).map_err(|_| SceneError::Parse {
                    line,
                    msg: format!("`{raw}` is not a number"),
                }),
            }
        };
        let ts_raw = rec.get(ts_col).unwrap_or_default();
        let timestamp_us: i64 = ts_raw.parse().map_err(|_| SceneError::Parse {
            line,
            msg: format!("timestamp `{ts_raw}` is not an integer"),
        })?;
        let speed = parse_f(speed_col)?.ok_or_else(|| SceneError::Parse {
            line,
            msg: "missing speed".into(),
        })?;
        if !(speed >= 0.0) || !speed.is_finite() {
            return Err(SceneError::Schema(format!("line {line}: speed {speed} must be non-negative")));
        }
        let opt = |i: usize| optional[i].map(parse_f).transpose().map(Option::flatten);
        samples.push(EgoSample {
            timestamp_us,
            speed,
            accel: opt(0)?,
            steer_deg: opt(1)?,
            throttle: opt(2)?,
            brake: opt(3)?,
        });
    }
    DynamicsSeries::new(samples)
}

impl DynamicsSeries {
    /// Sorts by time; duplicate timestamps are a schema error.
    pub fn new(mut samples: Vec<EgoSample>) -> Result<Self, SceneError> {
        samples.sort_by_key(|s| s.timestamp_us);
        if let Some(w) = samples.windows(2).find(|w| w[0].timestamp_us == w[1].timestamp_us) {
            return Err(SceneError::Schema(format!("duplicate timestamp {}", w[0].timestamp_us)));
        }
        if let Some(s) = samples.iter().find(|s| !(s.speed >= 0.0)) {
            return Err(SceneError::Schema(format!("negative speed at {}", s.timestamp_us)));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[EgoSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(DYNAMICS_HEADER);
        s.push('\n');
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.samples {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.timestamp_us,
                e.speed,
                f(e.accel),
                f(e.steer_deg),
                f(e.throttle),
                f(e.brake)
            ));
        }
        s
    }

    fn interpolate(&self, t_us: i64, value: impl Fn(&EgoSample) -> Option<f64>) -> Result<Option<f64>, SceneError> {
        let (first, last) = match (self.samples.first(), self.samples.last()) {
            (Some(f), Some(l)) => (f.timestamp_us, l.timestamp_us),
            _ => return Err(SceneError::Empty),
        };
        if t_us < first || t_us > last {
            return Err(SceneError::OutOfRange { t_us, first, last });
        }
        let i = self.samples.partition_point(|s| s.timestamp_us < t_us);
        let hi = &self.samples[i];
        if hi.timestamp_us == t_us {
            return Ok(value(hi));
        }
        let lo = &self.samples[i - 1];
        let (Some(a), Some(b)) = (value(lo), value(hi)) else {
            return Ok(None);
        };
        let f = (t_us - lo.timestamp_us) as f64 / (hi.timestamp_us - lo.timestamp_us) as f64;
        Ok(Some(a + f * (b - a)))
    }

    /// Linearly interpolated ego speed.
    pub fn ego_speed_at(&self, t_us: i64) -> Result<f64, SceneError> {
        Ok(self.interpolate(t_us, |s| Some(s.speed))?.expect("speed always present"))
    }

    /// Linearly interpolated logged acceleration, `None` if the log lacks it.
    pub fn accel_at(&self, t_us: i64) -> Result<Option<f64>, SceneError> {
        self.interpolate(t_us, |s| s.accel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaneConfig {
    pub lane_width: f64,
    /// Adjacent lanes considered on each side; 0 keeps only the ego lane.
    pub num_side_lanes: u32,
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            num_side_lanes: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Left,
    Ego,
    Right,
    Outside,
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Left => "left",
            Lane::Ego => "ego",
            Lane::Right => "right",
            Lane::Outside => "outside",
        }
    }
}

/// Lane from lateral offset alone.
pub fn lane_of(cy: f64, lanes: &LaneConfig) -> Lane {
    let half = 0.5 * lanes.lane_width;
    if cy.abs() <= half {
        Lane::Ego
    } else if lanes.num_side_lanes == 0 {
        Lane::Outside
    } else if cy > half && cy <= 3.0 * half {
        Lane::Left
    } else if cy < -half && cy >= -3.0 * half {
        Lane::Right
    } else {
        Lane::Outside
    }
}

pub fn assign_lane(b: &TrackedBox, lanes: &LaneConfig) -> Lane {
    lane_of(b.detection.bbox.cy, lanes)
}

/// Nearest vehicle ahead or behind in a lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    /// Bumper-to-bumper distance, meters, at least [`MIN_GAP_M`].
    pub gap: f64,
    /// Positive when the gap is shrinking.
    pub rel_speed: f64,
    /// Ground speed, ego speed plus the tracked relative velocity.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneNeighbors {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub timestamp_us: i64,
    pub left: LaneNeighbors,
    pub ego: LaneNeighbors,
    pub right: LaneNeighbors,
}

/// One exported line: `{timestamp_us, lane, leader, follower}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneRecord {
    pub timestamp_us: i64,
    pub lane: Lane,
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
}

impl SceneSummary {
    pub fn lane(&self, lane: Lane) -> Option<&LaneNeighbors> {
        match lane {
            Lane::Left => Some(&self.left),
            Lane::Ego => Some(&self.ego),
            Lane::Right => Some(&self.right),
            Lane::Outside => None,
        }
    }

    pub fn records(&self) -> Vec<LaneRecord> {
        [Lane::Left, Lane::Ego, Lane::Right]
            .into_iter()
            .map(|lane| {
                let n = self.lane(lane).expect("real lane");
                LaneRecord {
                    timestamp_us: self.timestamp_us,
                    lane,
                    leader: n.leader,
                    follower: n.follower,
                }
            })
            .collect()
    }
}

pub fn bumper_gap(cx: f64, ego_length: f64, other_length: f64) -> f64 {
    (cx.abs() - 0.5 * (ego_length + other_length)).max(MIN_GAP_M)
}

pub fn summarize_scene(
    timestamp_us: i64,
    tracks: &[TrackedBox],
    lanes: &LaneConfig,
    ego_speed: f64,
    ego_length: f64,
) -> SceneSummary {
    let neighbors = |lane: Lane| -> LaneNeighbors {
        let in_lane = tracks.iter().filter(|t| assign_lane(t, lanes) == lane);
        let cx = |t: &TrackedBox| t.detection.bbox.cx;
        // ties on position resolve by id so input order never matters
        let leader = in_lane
            .clone()
            .filter(|t| cx(t) > 0.0)
            .min_by(|a, b| cx(a).total_cmp(&cx(b)).then(a.id.cmp(&b.id)));
        let follower = in_lane
            .filter(|t| cx(t) < 0.0)
            .max_by(|a, b| cx(a).total_cmp(&cx(b)).then(b.id.cmp(&a.id)));
        let describe = |t: &TrackedBox, closing: f64| Neighbor {
            id: t.id,
            gap: bumper_gap(cx(t), ego_length, t.detection.bbox.l),
            rel_speed: closing,
            speed: ego_speed + t.vx,
        };
        LaneNeighbors {
            leader: leader.map(|t| describe(t, -t.vx)),
            follower: follower.map(|t| describe(t, t.vx)),
        }
    };
    SceneSummary {
        timestamp_us,
        left: neighbors(Lane::Left),
        ego: neighbors(Lane::Ego),
        right: neighbors(Lane::Right),
    }
}
