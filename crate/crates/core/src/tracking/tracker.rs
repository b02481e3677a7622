use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::assign::associate;
use super::kalman::KalmanState;
use crate::detection::{Detection, ObjectClass};
use crate::geometry::{normalize_angle, OrientedBox};

/// Initial velocity variance of a newly spawned track, (m/s)^2.
const NEW_TRACK_VELOCITY_VAR: f64 = 1e2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("frame timestamp {got} does not follow previous timestamp {previous}")]
    Ordering { previous: i64, got: i64 },
    #[error("invalid tracker config: {0}")]
    Config(String),
    #[error("invalid detection in frame `{frame_id}`: {msg}")]
    Detection { frame_id: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Consecutive hits before a track is reported.
    pub confirm_hits: u32,
    /// Consecutive misses tolerated before a track is dropped.
    pub max_misses: u32,
    pub gate_iou: f64,
    pub process_noise_accel_sigma: f64,
    pub meas_noise_sigma: f64,
    /// Weight of the new measurement when smoothing extents and yaw.
    pub extents_smoothing_alpha: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            confirm_hits: 3,
            max_misses: 5,
            gate_iou: 0.1,
            process_noise_accel_sigma: 1.0,
            meas_noise_sigma: 0.3,
            extents_smoothing_alpha: 0.3,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        let err = |m: &str| Err(TrackError::Config(m.to_string()));
        if self.confirm_hits < 1 {
            return err("confirm_hits must be at least 1");
        }
        if self.max_misses < 1 {
            return err("max_misses must be at least 1");
        }
        if !(0.0..1.0).contains(&self.gate_iou) {
            return err("gate_iou must lie in [0, 1)");
        }
        if !(self.process_noise_accel_sigma > 0.0) || !(self.meas_noise_sigma > 0.0) {
            return err("noise sigmas must be positive");
        }
        if !(0.0..=1.0).contains(&self.extents_smoothing_alpha) {
            return err("extents_smoothing_alpha must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    pub w: f64,
    pub l: f64,
    pub yaw: f64,
    pub cls: ObjectClass,
    pub score: f64,
    pub status: TrackStatus,
    pub hit_streak: u32,
    pub miss_streak: u32,
    pub last_update_us: i64,
}

impl Track {
    pub fn bbox(&self) -> OrientedBox {
        let (x, y) = self.state.position();
        OrientedBox::new(x, y, self.w, self.l, self.yaw)
    }

    pub fn predict(&self, dt_s: f64, accel_sigma: f64) -> Track {
        Track {
            state: self.state.predict(dt_s, accel_sigma),
            ..self.clone()
        }
    }

    pub fn correct(&self, det: &Detection, cfg: &TrackerConfig) -> Track {
        let a = cfg.extents_smoothing_alpha;
        let b = det.bbox;
        Track {
            state: self.state.correct(b.cx, b.cy, cfg.meas_noise_sigma),
            w: (1.0 - a) * self.w + a * b.w,
            l: (1.0 - a) * self.l + a * b.l,
            yaw: normalize_angle(self.yaw + a * normalize_angle(b.yaw - self.yaw)),
            cls: det.cls,
            score: det.score,
            ..self.clone()
        }
    }

    pub fn to_tracked_box(&self) -> TrackedBox {
        let (vx, vy) = self.state.velocity();
        TrackedBox {
            id: self.id,
            detection: Detection::new(self.cls, self.bbox(), self.score),
            vx,
            vy,
            status: self.status,
        }
    }
}

/// Input unit of the tracker: the detections of one sensor sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: String,
    pub timestamp_us: i64,
    pub detections: Vec<Detection>,
}

/// Wire shape `{id, cls, cx, cy, w, l, yaw, score, vx, vy, status}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedBox {
    pub id: u64,
    #[serde(flatten)]
    pub detection: Detection,
    pub vx: f64,
    pub vy: f64,
    pub status: TrackStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedFrame {
    pub frame_id: String,
    pub timestamp_us: i64,
    pub tracks: Vec<TrackedBox>,
}

/// One tracking session.
///
/// Tracks are kept in id order, so association ties resolve toward older
/// tracks. Ids increase monotonically and are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_timestamp_us: Option<i64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackError> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_timestamp_us: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live (tentative or confirmed) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn last_timestamp_us(&self) -> Option<i64> {
        self.last_timestamp_us
    }

    /// Ids handed out so far are exactly `1..next_id`.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn update(&mut self, frame: &Frame) -> Result<TrackedFrame, TrackError> {
        if let Some(prev) = self.last_timestamp_us {
            if frame.timestamp_us <= prev {
                return Err(TrackError::Ordering {
                    previous: prev,
                    got: frame.timestamp_us,
                });
            }
        }
        if let Some(bad) = frame.detections.iter().find(|d| !d.is_valid()) {
            return Err(TrackError::Detection {
                frame_id: frame.frame_id.clone(),
                msg: format!("{bad:?}"),
            });
        }
        let cfg = self.config;

        if let Some(prev) = self.last_timestamp_us {
            let dt = (frame.timestamp_us - prev) as f64 * 1e-6;
            for t in &mut self.tracks {
                *t = t.predict(dt, cfg.process_noise_accel_sigma);
            }
        }
        self.last_timestamp_us = Some(frame.timestamp_us);

        let predicted: Vec<OrientedBox> = self.tracks.iter().map(Track::bbox).collect();
        let det_boxes: Vec<OrientedBox> = frame.detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(&predicted, &det_boxes, cfg.gate_iou);

        for &(ti, di) in &assoc.matches {
            let t = &mut self.tracks[ti];
            *t = t.correct(&frame.detections[di], &cfg);
            t.hit_streak += 1;
            t.miss_streak = 0;
            t.last_update_us = frame.timestamp_us;
            if t.status == TrackStatus::Tentative && t.hit_streak >= cfg.confirm_hits {
                t.status = TrackStatus::Confirmed;
            }
        }
        for &ti in &assoc.unmatched_tracks {
            // keeps the predicted state: best-guess imputation
            let t = &mut self.tracks[ti];
            t.miss_streak += 1;
            t.hit_streak = 0;
            if t.miss_streak > cfg.max_misses {
                t.status = TrackStatus::Dead;
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Dead);

        for &di in &assoc.unmatched_detections {
            let d = &frame.detections[di];
            let status = if cfg.confirm_hits <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            self.tracks.push(Track {
                id: self.next_id,
                state: KalmanState::init(d.bbox.cx, d.bbox.cy, cfg.meas_noise_sigma, NEW_TRACK_VELOCITY_VAR),
                w: d.bbox.w,
                l: d.bbox.l,
                yaw: d.bbox.yaw,
                cls: d.cls,
                score: d.score,
                status,
                hit_streak: 1,
                miss_streak: 0,
                last_update_us: frame.timestamp_us,
            });
            self.next_id += 1;
        }

        Ok(TrackedFrame {
            frame_id: frame.frame_id.clone(),
            timestamp_us: frame.timestamp_us,
            tracks: self
                .tracks
                .iter()
                .filter(|t| t.status == TrackStatus::Confirmed)
                .map(Track::to_tracked_box)
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(cx: f64, cy: f64) -> Detection {
        Detection::new(ObjectClass::Car, OrientedBox::new(cx, cy, 1.8, 4.5, 0.0), 0.9)
    }

    fn frame(k: i64, dets: Vec<Detection>) -> Frame {
        Frame {
            frame_id: format!("f{k}"),
            timestamp_us: 1_000_000 + k * 100_000,
            detections: dets,
        }
    }

    #[test]
    fn empty_frame_empty_response() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(t.update(&frame(0, vec![])).unwrap().tracks.is_empty());
    }

    #[test]
    fn short_lived_object_is_never_reported() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        for k in 0..10 {
            let dets = if k < 2 { vec![det(10.0, 0.0)] } else { vec![] };
            assert!(t.update(&frame(k, dets)).unwrap().tracks.is_empty());
        }
    }

    #[test]
    fn occluded_object_is_imputed_then_reacquired() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let x = |k: i64| 10.0 + 0.2 * k as f64;
        let mut id = None;
        for k in 0..20 {
            let occluded = (10..13).contains(&k);
            let dets = if occluded { vec![] } else { vec![det(x(k), 0.0)] };
            let out = t.update(&frame(k, dets)).unwrap();
            if k >= 2 {
                assert_eq!(out.tracks.len(), 1, "frame {k}");
                let tb = out.tracks[0];
                assert_eq!(*id.get_or_insert(tb.id), tb.id);
                if occluded {
                    assert!((tb.detection.bbox.cx - x(k)).abs() < 0.1, "{k}: {}", tb.detection.bbox.cx);
                }
            }
        }
    }

    #[test]
    fn long_absence_kills_track_without_revival() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        for k in 0..5 {
            t.update(&frame(k, vec![det(10.0, 0.0)])).unwrap();
        }
        for k in 5..11 {
            t.update(&frame(k, vec![])).unwrap();
        }
        assert!(t.tracks().is_empty());
        let out = t.update(&frame(11, vec![det(10.0, 0.0)])).unwrap();
        assert!(out.tracks.is_empty());
        assert_eq!(t.tracks()[0].id, 2);
    }

    #[test]
    fn timestamps_must_increase() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.update(&frame(3, vec![])).unwrap();
        assert!(matches!(t.update(&frame(3, vec![])), Err(TrackError::Ordering { .. })));
        assert!(matches!(t.update(&frame(1, vec![])), Err(TrackError::Ordering { .. })));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrackerConfig {
            confirm_hits: 0,
            ..Default::default()
        };
        assert!(Tracker::new(cfg).is_err());
    }

    #[test]
    fn noiseless_velocity_converges() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let (vx, vy) = (3.0, -0.5);
        let mut last = None;
        for k in 0..60 {
            let s = k as f64 * 0.1;
            let out = t.update(&frame(k, vec![det(5.0 + vx * s, 2.0 + vy * s)])).unwrap();
            last = out.tracks.first().copied();
        }
        let tb = last.unwrap();
        assert!((tb.vx - vx).abs() < 1e-3 && (tb.vy - vy).abs() < 1e-3, "{} {}", tb.vx, tb.vy);
    }
}
