//! Pipeline configuration.
//!
//! Values are resolved in three layers: built-in defaults, then the TOML
//! file given with `--config`, then command-line flags. Relative paths in the
//! file are taken relative to the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use drivescope_core::bevmap::GridConfig;
use drivescope_core::characterization::{FitConfig, ParamBounds};
use drivescope_core::detection::OracleConfig;
use drivescope_core::pointcloud::GroundConfig;
use drivescope_core::scene::LaneConfig;
use drivescope_core::tracking::TrackerConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::scenario::ScenarioSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    /// CSV index `frame_id,timestamp_us,file`.
    pub frames_index: PathBuf,
    pub dynamics: PathBuf,
    pub physiology: Option<PathBuf>,
    /// Ground-truth boxes for the oracle detector.
    pub truth: Option<PathBuf>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            frames_index: PathBuf::from("frames/index.csv"),
            dynamics: PathBuf::from("dynamics.csv"),
            physiology: None,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Oracle,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub oracle: OracleConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Oracle,
            endpoint: None,
            timeout_ms: 5000,
            oracle: OracleConfig::default(),
        }
    }
}

/// `oracle` or `remote=URL`, as accepted by `--detector`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorChoice {
    Oracle,
    Remote(String),
}

impl FromStr for DetectorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('=') {
            None if s == "oracle" => Ok(DetectorChoice::Oracle),
            Some(("remote", url)) if !url.is_empty() => Ok(DetectorChoice::Remote(url.to_string())),
            _ => Err(format!("expected `oracle` or `remote=URL`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AzimuthConfig {
    pub iou_thresh: f64,
    pub seam_margin_m: f64,
}

impl Default for AzimuthConfig {
    fn default() -> Self {
        Self {
            iou_thresh: 0.3,
            seam_margin_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StagesConfig {
    pub ground_removal: bool,
    pub ground: GroundConfig,
    /// Drop points outside any cluster before rasterizing.
    pub clustering: bool,
    pub cluster_eps_m: f64,
    pub cluster_min_points: usize,
}

impl Default for StagesConfig {
    fn default() -> Self {
        Self {
            ground_removal: false,
            ground: GroundConfig::default(),
            clustering: false,
            cluster_eps_m: 0.7,
            cluster_min_points: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DvSource {
    /// Leader relative speed as estimated by the tracker.
    TrackVelocity,
    /// Central differences of the tracked leader position.
    GapDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmStageConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub bounds: ParamBounds,
    pub fit: FitConfig,
    /// Frames a leader track must have been reported before it is used.
    pub warmup_frames: usize,
    /// Low-pass cutoff when acceleration is derived from logged speed.
    pub accel_cutoff_hz: f64,
    pub dv_source: DvSource,
}

impl Default for IdmStageConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            stride_s: 5.0,
            bounds: ParamBounds::default(),
            fit: FitConfig::default(),
            warmup_frames: 3,
            accel_cutoff_hz: 1.0,
            dv_source: DvSource::GapDifference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    pub enabled: bool,
    pub grid_hz: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            grid_hz: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPolicy {
    /// Stop at the first failing frame.
    Abort,
    /// Record the frame as dropped and carry on.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Capacity of each inter-stage queue.
    pub queue_depth: usize,
    pub on_frame_error: ErrorPolicy,
    pub ego_length_m: f64,
    /// Remote tracking service; the in-process tracker is used when absent.
    pub tracking_endpoint: Option<String>,
    pub input: InputConfig,
    pub grid: GridConfig,
    pub azimuth: AzimuthConfig,
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    pub stages: StagesConfig,
    pub lanes: LaneConfig,
    pub idm: IdmStageConfig,
    pub correlation: CorrelationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            queue_depth: 4,
            on_frame_error: ErrorPolicy::Abort,
            ego_length_m: 4.5,
            tracking_endpoint: None,
            input: InputConfig::default(),
            grid: GridConfig::default(),
            azimuth: AzimuthConfig::default(),
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            stages: StagesConfig::default(),
            lanes: LaneConfig::default(),
            idm: IdmStageConfig::default(),
            correlation: CorrelationConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Config matching the files written by the scenario generator, with the
    /// tracker's measurement noise set for an exact oracle. The map covers
    /// the sensor range at the default cell size.
    pub fn for_scenario(spec: &ScenarioSpec) -> Self {
        let span_s = (spec.frames.saturating_sub(1)) as f64 / spec.frame_rate_hz;
        let base = GridConfig::default();
        let cells = (spec.max_range_m / base.cell_size()).round() as usize * 2;
        Self {
            seed: spec.seed,
            grid: GridConfig {
                extent_m: cells as f64 * base.cell_size() / 2.0,
                cells_per_side: cells,
                ..base
            },
            ego_length_m: spec.ego.length_m,
            input: InputConfig {
                frames_index: PathBuf::from("frames/index.csv"),
                dynamics: PathBuf::from("dynamics.csv"),
                physiology: Some(PathBuf::from("physiology.csv")),
                truth: Some(PathBuf::from("truth.csv")),
            },
            tracker: TrackerConfig {
                meas_noise_sigma: 0.01,
                process_noise_accel_sigma: 2.0,
                ..TrackerConfig::default()
            },
            idm: IdmStageConfig {
                window_s: (0.6 * span_s).max(1.0),
                stride_s: (0.1 * span_s).max(0.5),
                ..IdmStageConfig::default()
            },
            correlation: CorrelationConfig {
                enabled: true,
                grid_hz: 2.0,
            },
            ..Self::default()
        }
    }

    /// Reads a TOML file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.input.frames_index);
        fix(&mut self.input.dynamics);
        if let Some(p) = self.input.physiology.as_mut() {
            fix(p);
        }
        if let Some(p) = self.input.truth.as_mut() {
            fix(p);
        }
    }

    /// Propagates the run seed to every seeded component.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.detector.oracle.seed = seed;
        self.stages.ground.seed = seed;
        self.idm.fit.seed = seed;
    }

    pub fn apply_detector(&mut self, choice: &DetectorChoice) {
        match choice {
            DetectorChoice::Oracle => self.detector.kind = DetectorKind::Oracle,
            DetectorChoice::Remote(url) => {
                self.detector.kind = DetectorKind::Remote;
                self.detector.endpoint = Some(url.clone());
            }
        }
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let exists = |what: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(CliError::config(format!("{what} `{}` not found", p.display())))
            }
        };
        exists("frame index", &self.input.frames_index)?;
        exists("dynamics file", &self.input.dynamics)?;
        if self.correlation.enabled {
            match &self.input.physiology {
                Some(p) => exists("physiology file", p)?,
                None => return Err(CliError::config("correlation is enabled but no physiology file is set")),
            }
            if !(self.correlation.grid_hz > 0.0) {
                return Err(CliError::config("correlation.grid_hz must be positive"));
            }
        }
        match self.detector.kind {
            DetectorKind::Oracle => match &self.input.truth {
                Some(p) => exists("truth file", p)?,
                None => return Err(CliError::config("the oracle detector needs input.truth")),
            },
            DetectorKind::Remote => {
                if self.detector.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(CliError::config("the remote detector needs detector.endpoint"));
                }
            }
        }
        self.grid.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.tracker.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.idm.bounds.validate().map_err(|e| CliError::config(e.to_string()))?;
        if !(self.azimuth.iou_thresh > 0.0 && self.azimuth.iou_thresh < 1.0) {
            return Err(CliError::config("azimuth.iou_thresh must lie in (0, 1)"));
        }
        if !(self.idm.window_s > 0.0 && self.idm.stride_s > 0.0) {
            return Err(CliError::config("idm window and stride must be positive"));
        }
        if !(self.lanes.lane_width > 0.0) || !(self.ego_length_m > 0.0) {
            return Err(CliError::config("lane width and ego length must be positive"));
        }
        if self.queue_depth == 0 {
            return Err(CliError::config("queue_depth must be at least 1"));
        }
        Ok(())
    }
}
