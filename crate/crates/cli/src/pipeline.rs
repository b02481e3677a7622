//! End-to-end run over recorded frames.
//!
//! Frames move through three stages connected by bounded queues:
//! loading, detection (preprocessing, top-view map, full-azimuth detection)
//! and an ordered tracking stage that also builds the scene summaries.
//! Car-following estimation and correlation run once all frames are in.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use drivescope_core::characterization::{
    derive_accel, fit_idm, pearson, sliding_estimation, FitFlag, FollowSample, IdmParams, ParamRow,
    SignalSeries,
};
use drivescope_core::detection::{detect_full_azimuth, Detection, Detector, FullAzimuthConfig, OracleDetector};
use drivescope_core::pointcloud::{cluster, parse_frame, remove_ground, CloudFormat, PointCloud};
use drivescope_core::scene::{parse_dynamics, summarize_scene, DynamicsSeries, LaneRecord, SceneSummary};
use drivescope_core::tracking::{Frame, TrackedFrame, Tracker};
use drivescope_service::{MotsClient, OdsClient};
use serde::{Deserialize, Serialize};

use crate::config::{DetectorKind, DvSource, ErrorPolicy, PipelineConfig};
use crate::error::CliError;
use crate::io::{self, FrameRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFrame {
    pub frame_id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallFit {
    pub params: IdmParams,
    pub sse: f64,
    pub n: usize,
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub r: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub grid_hz: f64,
    pub t0_us: Option<i64>,
    pub t1_us: Option<i64>,
    /// Parameter name to Pearson r against the physiology signal.
    pub values: BTreeMap<String, CorrelationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames_total: usize,
    pub frames_processed: usize,
    pub dropped: Vec<DroppedFrame>,
    pub detections: usize,
    pub track_ids: Vec<u64>,
    pub follow_samples: usize,
    /// Fit over every usable follow sample.
    pub idm_overall: Option<OverallFit>,
    pub idm_overall_error: Option<String>,
    pub windows: usize,
    pub skipped_windows: usize,
    pub params: Vec<ParamRow>,
    pub correlation: Option<CorrelationReport>,
    pub physiology: Option<String>,
    pub failure: Option<DroppedFrame>,
}

enum Msg<T> {
    Item(T),
    Dropped(DroppedFrame),
}

struct Loaded {
    frame: FrameRef,
    cloud: PointCloud,
}

struct Detected {
    frame: FrameRef,
    detections: Vec<Detection>,
}

pub fn build_detector(cfg: &PipelineConfig) -> Result<Arc<dyn Detector>, CliError> {
    match cfg.detector.kind {
        DetectorKind::Oracle => {
            let path = cfg
                .input
                .truth
                .as_ref()
                .ok_or_else(|| CliError::config("the oracle detector needs input.truth"))?;
            let rows = io::read_string(path)
                .and_then(|t| io::parse_truth(&t))
                .map_err(|e| CliError::config(format!("truth file: {e}")))?;
            Ok(Arc::new(OracleDetector::per_frame(
                io::truth_by_frame(&rows),
                cfg.detector.oracle,
            )))
        }
        DetectorKind::Remote => {
            let url = cfg.detector.endpoint.clone().unwrap_or_default();
            let client = OdsClient::new(&url, Duration::from_millis(cfg.detector.timeout_ms))
                .map_err(|e| CliError::config(e.to_string()))?;
            Ok(Arc::new(client))
        }
    }
}

/// Optional ground removal and cluster filtering.
pub fn preprocess(cloud: PointCloud, cfg: &PipelineConfig) -> PointCloud {
    let mut cloud = cloud;
    if cfg.stages.ground_removal {
        cloud = remove_ground(&cloud, &cfg.stages.ground).cloud;
    }
    if cfg.stages.clustering {
        let groups = cluster(&cloud, cfg.stages.cluster_eps_m, cfg.stages.cluster_min_points);
        let mut keep: Vec<usize> = groups.into_iter().flatten().collect();
        keep.sort_unstable();
        let pts = keep.into_iter().map(|i| cloud.points[i]).collect();
        cloud = cloud.with_points(pts);
    }
    cloud
}

fn load_stage(frames: Vec<FrameRef>, tx: SyncSender<Msg<Loaded>>) {
    for frame in frames {
        let msg = std::fs::read(&frame.path)
            .map_err(|e| format!("{}: {e}", frame.path.display()))
            .and_then(|bytes| {
                parse_frame(&bytes, CloudFormat::Csv, &frame.frame_id, frame.timestamp_us).map_err(|e| e.to_string())
            });
        let msg = match msg {
            Ok(cloud) => Msg::Item(Loaded { frame, cloud }),
            Err(reason) => Msg::Dropped(DroppedFrame {
                frame_id: frame.frame_id,
                stage: "load".into(),
                reason,
            }),
        };
        if tx.send(msg).is_err() {
            return;
        }
    }
}

fn detect_stage(
    rx: Receiver<Msg<Loaded>>,
    tx: SyncSender<Msg<Detected>>,
    detector: Arc<dyn Detector>,
    cfg: PipelineConfig,
) {
    let az = FullAzimuthConfig {
        grid: cfg.grid,
        iou_thresh: cfg.azimuth.iou_thresh,
        seam_margin_m: cfg.azimuth.seam_margin_m,
    };
    for msg in rx {
        let out = match msg {
            Msg::Dropped(d) => Msg::Dropped(d),
            Msg::Item(Loaded { frame, cloud }) => {
                let cloud = preprocess(cloud, &cfg);
                match detect_full_azimuth(&cloud, &detector, &az) {
                    Ok(detections) => Msg::Item(Detected { frame, detections }),
                    Err(e) => Msg::Dropped(DroppedFrame {
                        frame_id: frame.frame_id,
                        stage: "detect".into(),
                        reason: e.to_string(),
                    }),
                }
            }
        };
        if tx.send(out).is_err() {
            return;
        }
    }
}

enum TrackBackend {
    Local(Tracker),
    Remote { client: MotsClient, session: u64 },
}

impl TrackBackend {
    fn update(&mut self, frame: &Frame) -> Result<TrackedFrame, String> {
        match self {
            TrackBackend::Local(t) => t.update(frame).map_err(|e| e.to_string()),
            TrackBackend::Remote { client, session } => client.post_frame(*session, frame).map_err(|e| e.to_string()),
        }
    }

    fn close(self) {
        if let TrackBackend::Remote { client, session } = self {
            let _ = client.close_session(session);
        }
    }
}

/// Everything the frame loop produces.
#[derive(Debug, Clone, Default)]
pub struct FrameOutputs {
    pub detections: Vec<Frame>,
    pub tracks: Vec<TrackedFrame>,
    pub scenes: Vec<SceneSummary>,
    pub dropped: Vec<DroppedFrame>,
}

fn accel_source(dynamics: &DynamicsSeries, cutoff_hz: f64) -> Result<SignalSeries, String> {
    let samples = dynamics.samples();
    if samples.iter().all(|s| s.accel.is_some()) {
        return SignalSeries::new(samples.iter().map(|s| (s.timestamp_us, s.accel.unwrap())).collect())
            .map_err(|e| e.to_string());
    }
    let times: Vec<i64> = samples.iter().map(|s| s.timestamp_us).collect();
    let speeds: Vec<f64> = samples.iter().map(|s| s.speed).collect();
    let a = derive_accel(&times, &speeds, cutoff_hz).map_err(|e| e.to_string())?;
    SignalSeries::new(times.into_iter().zip(a).collect()).map_err(|e| e.to_string())
}

/// Ego-lane leader observables, one sample per frame with a mature leader.
///
/// Runs of consecutive frames with the same leader are collected first so
/// the closing speed can be differenced within a run.
pub fn follow_samples(
    tracks: &[TrackedFrame],
    scenes: &[SceneSummary],
    dynamics: &DynamicsSeries,
    cfg: &PipelineConfig,
) -> Result<Vec<FollowSample>, String> {
    let accel = accel_source(dynamics, cfg.idm.accel_cutoff_hz)?;
    let mut age: BTreeMap<u64, usize> = BTreeMap::new();
    // (timestamp, leader id, leader center x, gap, tracker closing speed)
    let mut rows: Vec<(i64, u64, f64, f64, f64)> = Vec::new();
    for (frame, scene) in tracks.iter().zip(scenes) {
        for t in &frame.tracks {
            *age.entry(t.id).or_default() += 1;
        }
        let Some(leader) = scene.ego.leader else { continue };
        if age.get(&leader.id).copied().unwrap_or(0) <= cfg.idm.warmup_frames {
            continue;
        }
        let cx = frame
            .tracks
            .iter()
            .find(|t| t.id == leader.id)
            .map(|t| t.detection.bbox.cx)
            .expect("leader comes from this frame");
        rows.push((frame.timestamp_us, leader.id, cx, leader.gap, leader.rel_speed));
    }

    let mut out = Vec::with_capacity(rows.len());
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && rows[end].1 == rows[start].1 {
            end += 1;
        }
        let run = &rows[start..end];
        for (i, &(t, _, _, gap, tracked_dv)) in run.iter().enumerate() {
            let dv = match cfg.idm.dv_source {
                DvSource::TrackVelocity => tracked_dv,
                DvSource::GapDifference if run.len() < 2 => tracked_dv,
                DvSource::GapDifference => {
                    let (a, b) = (i.saturating_sub(1), (i + 1).min(run.len() - 1));
                    let dt = (run[b].0 - run[a].0) as f64 * 1e-6;
                    -(run[b].2 - run[a].2) / dt
                }
            };
            let v = dynamics.ego_speed_at(t).map_err(|e| e.to_string())?;
            let a_obs = accel.value_at(t).map_err(|e| e.to_string())?;
            out.push(FollowSample {
                timestamp_us: t,
                v,
                s: gap,
                dv,
                a_obs,
            });
        }
        start = end;
    }
    Ok(out)
}

/// Pearson r of each parameter series against physiology over the span both
/// cover.
pub fn correlate(rows: &[ParamRow], phys: &SignalSeries, grid_hz: f64) -> CorrelationReport {
    let names = crate::plots::PARAM_NAMES;
    let centers: Vec<i64> = rows.iter().map(|w| w.t_center_us).collect();
    let range = match (centers.first(), centers.last(), phys.samples().first(), phys.samples().last()) {
        (Some(c0), Some(c1), Some(p0), Some(p1)) => Some(((*c0).max(p0.0), (*c1).min(p1.0))),
        _ => None,
    };
    let mut values = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let entry = match range {
            None => Err("no parameter windows or empty physiology series".to_string()),
            Some((t0, t1)) => SignalSeries::new(
                rows.iter()
                    .map(|w| (w.t_center_us, w.params.to_array()[i]))
                    .collect(),
            )
            .and_then(|p| pearson(&p, phys, t0, t1, grid_hz))
            .map_err(|e| e.to_string()),
        };
        values.insert(
            name.to_string(),
            match entry {
                Ok(r) => CorrelationEntry { r: Some(r), error: None },
                Err(e) => CorrelationEntry { r: None, error: Some(e) },
            },
        );
    }
    CorrelationReport {
        grid_hz,
        t0_us: range.map(|r| r.0),
        t1_us: range.map(|r| r.1),
        values,
    }
}

/// Correlation report as `name=r` lines.
pub fn correlation_kv(report: &CorrelationReport) -> String {
    let mut s = String::new();
    for (name, e) in &report.values {
        match (e.r, &e.error) {
            (Some(r), _) => s.push_str(&format!("{name}={r}\n")),
            (None, Some(err)) => s.push_str(&format!("{name}=undefined ({err})\n")),
            (None, None) => s.push_str(&format!("{name}=undefined\n")),
        }
    }
    s
}

fn write_out(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    io::write(&dir.join(name), contents).map_err(|e| CliError::stage("write", None, e))
}

/// Runs every stage and writes the artifacts into `cfg.output_dir`:
/// `detections.jsonl`, `tracks.jsonl`, `scene.jsonl`, `follow_samples.csv`,
/// `params.csv`, `correlation.txt` and `report.json`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let frames = io::read_frame_index(&cfg.input.frames_index).map_err(CliError::config)?;
    let dynamics = io::read_string(&cfg.input.dynamics)
        .map_err(CliError::config)
        .and_then(|t| parse_dynamics(t.as_bytes()).map_err(|e| CliError::config(format!("dynamics: {e}"))))?;
    let physiology = match (&cfg.input.physiology, cfg.correlation.enabled) {
        (Some(p), true) => Some(
            io::read_string(p)
                .map_err(CliError::config)
                .and_then(|t| SignalSeries::parse_csv(&t).map_err(|e| CliError::config(format!("physiology: {e}"))))?,
        ),
        _ => None,
    };
    let detector = build_detector(cfg)?;
    let mut backend = match &cfg.tracking_endpoint {
        None => TrackBackend::Local(Tracker::new(cfg.tracker).map_err(|e| CliError::config(e.to_string()))?),
        Some(url) => {
            let client = MotsClient::new(url, Duration::from_millis(cfg.detector.timeout_ms))
                .map_err(|e| CliError::config(e.to_string()))?;
            let session = client
                .create_session(&cfg.tracker)
                .map_err(|e| CliError::stage("track", None, e))?;
            TrackBackend::Remote { client, session }
        }
    };
    let out_dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::config(format!("{}: {e}", out_dir.display())))?;

    let frames_total = frames.len();
    let (load_tx, load_rx) = sync_channel(cfg.queue_depth);
    let (det_tx, det_rx) = sync_channel(cfg.queue_depth);
    let loader = thread::spawn(move || load_stage(frames, load_tx));
    let det_cfg = cfg.clone();
    let detector_thread = thread::spawn(move || detect_stage(load_rx, det_tx, detector, det_cfg));

    let mut outputs = FrameOutputs::default();
    let mut failure = None;
    for msg in det_rx.iter() {
        let dropped = match msg {
            Msg::Dropped(d) => Some(d),
            Msg::Item(Detected { frame, detections }) => {
                let input = Frame {
                    frame_id: frame.frame_id.clone(),
                    timestamp_us: frame.timestamp_us,
                    detections,
                };
                match backend.update(&input) {
                    Err(reason) => Some(DroppedFrame {
                        frame_id: frame.frame_id,
                        stage: "track".into(),
                        reason,
                    }),
                    Ok(tracked) => match dynamics.ego_speed_at(frame.timestamp_us) {
                        Err(e) => Some(DroppedFrame {
                            frame_id: frame.frame_id,
                            stage: "scene".into(),
                            reason: e.to_string(),
                        }),
                        Ok(speed) => {
                            outputs.scenes.push(summarize_scene(
                                frame.timestamp_us,
                                &tracked.tracks,
                                &cfg.lanes,
                                speed,
                                cfg.ego_length_m,
                            ));
                            outputs.detections.push(input);
                            outputs.tracks.push(tracked);
                            None
                        }
                    },
                }
            }
        };
        if let Some(d) = dropped {
            if cfg.on_frame_error == ErrorPolicy::Abort {
                failure = Some(d);
                break;
            }
            outputs.dropped.push(d);
        }
    }
    drop(det_rx);
    let _ = loader.join();
    let _ = detector_thread.join();
    backend.close();

    let mut report = RunReport {
        frames_total,
        frames_processed: outputs.tracks.len(),
        dropped: outputs.dropped.clone(),
        detections: outputs.detections.iter().map(|f| f.detections.len()).sum(),
        track_ids: {
            let mut ids: Vec<u64> = outputs.tracks.iter().flat_map(|f| f.tracks.iter().map(|t| t.id)).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        },
        follow_samples: 0,
        idm_overall: None,
        idm_overall_error: None,
        windows: 0,
        skipped_windows: 0,
        params: Vec::new(),
        correlation: None,
        physiology: cfg.input.physiology.as_ref().map(|p| p.display().to_string()),
        failure: failure.clone(),
    };
    write_out(&out_dir, "detections.jsonl", io::to_jsonl(&outputs.detections))?;
    write_out(&out_dir, "tracks.jsonl", io::to_jsonl(&outputs.tracks))?;
    let records: Vec<LaneRecord> = outputs.scenes.iter().flat_map(|s| s.records()).collect();
    write_out(&out_dir, "scene.jsonl", io::to_jsonl(&records))?;

    if let Some(d) = failure {
        write_out(&out_dir, "report.json", serde_json::to_string_pretty(&report).expect("serializable"))?;
        return Err(CliError::stage(&d.stage, Some(&d.frame_id), d.reason));
    }

    let samples = follow_samples(&outputs.tracks, &outputs.scenes, &dynamics, cfg)
        .map_err(|e| CliError::stage("characterize", None, e))?;
    report.follow_samples = samples.len();
    write_out(&out_dir, "follow_samples.csv", io::follow_csv(&samples))?;
    match fit_idm(&samples, &cfg.idm.bounds, &cfg.idm.fit) {
        Ok(fit) => {
            report.idm_overall = Some(OverallFit {
                params: fit.params,
                sse: fit.sse,
                n: samples.len(),
                flags: fit.flags,
            })
        }
        Err(e) => report.idm_overall_error = Some(e.to_string()),
    }
    let series = sliding_estimation(&samples, cfg.idm.window_s, cfg.idm.stride_s, &cfg.idm.bounds, &cfg.idm.fit)
        .map_err(|e| CliError::stage("characterize", None, e))?;
    report.windows = series.windows.len();
    report.skipped_windows = series.skipped.len();
    report.params = series.rows();
    write_out(&out_dir, "params.csv", series.to_csv())?;

    if let Some(phys) = &physiology {
        let corr = correlate(&report.params, phys, cfg.correlation.grid_hz);
        write_out(&out_dir, "correlation.txt", correlation_kv(&corr))?;
        report.correlation = Some(corr);
    }
    write_out(&out_dir, "report.json", serde_json::to_string_pretty(&report).expect("serializable"))?;
    Ok(report)
}
