//! Command-line surface.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drivescope_core::bevmap::make_frgb;
use drivescope_core::characterization::{
    fit_idm, parse_param_series, sliding_estimation, SignalSeries,
};
use drivescope_core::detection::detect_full_azimuth;
use drivescope_core::detection::FullAzimuthConfig;
use drivescope_core::pointcloud::{
    decimate, decimate_labels, intersect_profiles, parse_frame, parse_kitti_labels, write_csv, CloudFormat, PointCloud,
};
use drivescope_core::scene::{parse_dynamics, summarize_scene, LaneRecord};
use drivescope_core::tracking::{Frame, TrackedFrame, Tracker};
use drivescope_service::{spawn_mots, spawn_ods, MotsClient};

use crate::config::{DetectorChoice, PipelineConfig};
use crate::error::CliError;
use crate::io;
use crate::pipeline::{self, build_detector, correlation_kv, RunReport};
use crate::plots::emit_plots;
use crate::scenario::{generate_scenario, ScenarioSpec, SensorKind};

#[derive(Debug, Parser)]
#[command(name = "drivescope", version, about = "Lidar perception and driver characterization")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. They override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// `oracle` or `remote=URL`.
    #[arg(long, global = true)]
    pub detector: Option<DetectorChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SensorArg {
    Puck,
    Hdl64e,
}

impl From<SensorArg> for SensorKind {
    fn from(s: SensorArg) -> Self {
        match s {
            SensorArg::Puck => SensorKind::Puck,
            SensorArg::Hdl64e => SensorKind::Hdl64e,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep only the lasers a sparser sensor would have, optionally filtering KITTI labels.
    Decimate {
        /// Point-cloud CSV.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "hdl64e")]
        source: SensorArg,
        #[arg(long, value_enum, default_value = "puck")]
        target: SensorArg,
        #[arg(long, default_value_t = 0.2)]
        tol_deg: f64,
        /// KITTI label file for the same frame.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_points: usize,
    },
    /// Rasterize one cloud into a top-view PNG plus its metadata.
    Bev {
        input: PathBuf,
        /// Capture time; looked up in the frame index when omitted.
        #[arg(long)]
        timestamp_us: Option<i64>,
    },
    /// Full-azimuth detection on one cloud.
    Detect {
        input: PathBuf,
        /// Capture time; looked up in the frame index when omitted.
        #[arg(long)]
        timestamp_us: Option<i64>,
    },
    /// Track a JSON-lines file of detection frames.
    Track {
        detections: PathBuf,
        /// Remote tracking service instead of the in-process tracker.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Per-lane leaders and followers for a JSON-lines file of tracked frames.
    Scene {
        tracks: PathBuf,
        #[arg(long)]
        dynamics: Option<PathBuf>,
    },
    /// Sliding-window car-following parameter estimation.
    IdmFit {
        /// CSV `timestamp_us,v,s,dv,a_obs`.
        samples: PathBuf,
        #[arg(long)]
        window_s: Option<f64>,
        #[arg(long)]
        stride_s: Option<f64>,
    },
    /// Pearson correlation of a parameter series against a physiology series.
    Correlate {
        params: PathBuf,
        physiology: PathBuf,
        #[arg(long)]
        grid_hz: Option<f64>,
    },
    /// Run every stage over recorded frames.
    Pipeline,
    /// Write a synthetic scenario with ground truth for every stage.
    GenScenario {
        /// TOML scenario description; built-in defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Serve the detection API.
    ServeOds {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Serve the tracking API.
    ServeMots {
        #[arg(long, default_value = "127.0.0.1:8081")]
        bind: String,
    },
    /// Charts from a run report.
    Plot {
        /// Defaults to `report.json` in the output directory.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        physiology: Option<PathBuf>,
    },
}

/// Defaults, then the config file, then flags.
pub fn effective_config(common: &CommonArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.apply_seed(seed);
    }
    if let Some(d) = &common.detector {
        cfg.apply_detector(d);
    }
    if let Some(dir) = &common.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, CliError> {
    io::read_string(path).map_err(CliError::config)
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    io::write(path, body).map_err(|e| CliError::stage("write", None, e))
}

fn frame_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn frame_timestamp(cfg: &PipelineConfig, path: &Path, given: Option<i64>) -> Result<i64, CliError> {
    if let Some(t) = given {
        return Ok(t);
    }
    let id = frame_id_of(path);
    io::read_frame_index(&cfg.input.frames_index)
        .ok()
        .and_then(|frames| frames.into_iter().find(|f| f.frame_id == id))
        .map(|f| f.timestamp_us)
        .ok_or_else(|| CliError::config(format!("`{id}` is not in the frame index; pass --timestamp-us")))
}

fn load_cloud(path: &Path, timestamp_us: i64) -> Result<PointCloud, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let frame_id = frame_id_of(path);
    parse_frame(&bytes, CloudFormat::Csv, &frame_id, timestamp_us).map_err(|e| CliError::stage("load", Some(&frame_id), e))
}

fn cloud_csv(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(cloud, &mut buf).expect("writing to memory");
    buf
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Decimate {
            input,
            source,
            target,
            tol_deg,
            labels,
            min_points,
        } => {
            if !(tol_deg > 0.0) || min_points == 0 {
                return Err(CliError::config("--tol-deg must be positive and --min-points at least 1"));
            }
            let cloud = load_cloud(&input, frame_timestamp(&cfg, &input, None).unwrap_or(1))?;
            let matches = intersect_profiles(&SensorKind::from(source).profile(), &SensorKind::from(target).profile());
            let angles: Vec<f64> = matches.iter().map(|m| m.source_angle).collect();
            let kept = decimate(&cloud, &angles, tol_deg);
            write(&out.join("decimated.csv"), cloud_csv(&kept))?;
            println!("kept {} of {} points on {} lasers", kept.len(), cloud.len(), angles.len());
            if let Some(path) = labels {
                let parsed = parse_kitti_labels(&read(&path)?).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                let kept_labels = decimate_labels(&parsed, &kept, min_points);
                let text: String = kept_labels.iter().map(|l| l.to_line() + "\n").collect();
                write(&out.join("labels.txt"), text)?;
                println!("kept {} of {} labels", kept_labels.len(), parsed.len());
            }
        }
        Command::Bev { input, timestamp_us } => {
            let timestamp_us = frame_timestamp(&cfg, &input, timestamp_us)?;
            let cloud = load_cloud(&input, timestamp_us)?;
            let map = make_frgb(&cloud, &cfg.grid).map_err(|e| CliError::stage("bev", Some(&cloud.frame_id), e))?;
            let png = map.encode_png().map_err(|e| CliError::stage("bev", Some(&cloud.frame_id), e))?;
            write(&out.join(format!("{}.png", cloud.frame_id)), png)?;
            write(&out.join(format!("{}.meta", cloud.frame_id)), map.meta().to_kv())?;
            println!("{} occupied cells", map.occupied_cells());
        }
        Command::Detect { input, timestamp_us } => {
            let timestamp_us = frame_timestamp(&cfg, &input, timestamp_us)?;
            let detector = build_detector(&cfg)?;
            let cloud = pipeline::preprocess(load_cloud(&input, timestamp_us)?, &cfg);
            let az = FullAzimuthConfig {
                grid: cfg.grid,
                iou_thresh: cfg.azimuth.iou_thresh,
                seam_margin_m: cfg.azimuth.seam_margin_m,
            };
            let detections = detect_full_azimuth(&cloud, &detector, &az)
                .map_err(|e| CliError::stage("detect", Some(&cloud.frame_id), e))?;
            let frame = Frame {
                frame_id: cloud.frame_id.clone(),
                timestamp_us,
                detections,
            };
            write(&out.join("detections.jsonl"), io::to_jsonl(std::slice::from_ref(&frame)))?;
            println!("{} detections", frame.detections.len());
        }
        Command::Track { detections, endpoint } => {
            let frames: Vec<Frame> = io::from_jsonl(&read(&detections)?).map_err(CliError::config)?;
            let endpoint = endpoint.or(cfg.tracking_endpoint.clone());
            let tracked: Vec<TrackedFrame> = match endpoint {
                None => {
                    let mut tracker = Tracker::new(cfg.tracker).map_err(|e| CliError::config(e.to_string()))?;
                    frames
                        .iter()
                        .map(|f| tracker.update(f).map_err(|e| CliError::stage("track", Some(&f.frame_id), e)))
                        .collect::<Result<_, _>>()?
                }
                Some(url) => {
                    let client = MotsClient::new(&url, Duration::from_millis(cfg.detector.timeout_ms))
                        .map_err(|e| CliError::config(e.to_string()))?;
                    let session = client.create_session(&cfg.tracker).map_err(|e| CliError::stage("track", None, e))?;
                    let res = frames
                        .iter()
                        .map(|f| client.post_frame(session, f).map_err(|e| CliError::stage("track", Some(&f.frame_id), e)))
                        .collect::<Result<Vec<_>, _>>();
                    let _ = client.close_session(session);
                    res?
                }
            };
            write(&out.join("tracks.jsonl"), io::to_jsonl(&tracked))?;
            println!("{} frames tracked", tracked.len());
        }
        Command::Scene { tracks, dynamics } => {
            let frames: Vec<TrackedFrame> = io::from_jsonl(&read(&tracks)?).map_err(CliError::config)?;
            let dyn_path = dynamics.unwrap_or(cfg.input.dynamics.clone());
            let series =
                parse_dynamics(read(&dyn_path)?.as_bytes()).map_err(|e| CliError::config(format!("dynamics: {e}")))?;
            let mut records: Vec<LaneRecord> = Vec::new();
            for f in &frames {
                let speed = series
                    .ego_speed_at(f.timestamp_us)
                    .map_err(|e| CliError::stage("scene", Some(&f.frame_id), e))?;
                records.extend(summarize_scene(f.timestamp_us, &f.tracks, &cfg.lanes, speed, cfg.ego_length_m).records());
            }
            write(&out.join("scene.jsonl"), io::to_jsonl(&records))?;
            println!("{} lane records", records.len());
        }
        Command::IdmFit {
            samples,
            window_s,
            stride_s,
        } => {
            let samples = io::parse_follow(&read(&samples)?).map_err(CliError::config)?;
            let window = window_s.unwrap_or(cfg.idm.window_s);
            let stride = stride_s.unwrap_or(cfg.idm.stride_s);
            let series = sliding_estimation(&samples, window, stride, &cfg.idm.bounds, &cfg.idm.fit)
                .map_err(|e| CliError::stage("characterize", None, e))?;
            write(&out.join("params.csv"), series.to_csv())?;
            match fit_idm(&samples, &cfg.idm.bounds, &cfg.idm.fit) {
                Ok(fit) => {
                    write(&out.join("fit.json"), serde_json::to_string_pretty(&fit).expect("serializable"))?;
                    println!("overall fit over {} samples: {:?} sse {}", samples.len(), fit.params, fit.sse);
                }
                Err(e) => println!("overall fit unavailable: {e}"),
            }
            println!("{} windows, {} skipped", series.windows.len(), series.skipped.len());
        }
        Command::Correlate {
            params,
            physiology,
            grid_hz,
        } => {
            let rows = parse_param_series(&read(&params)?).map_err(|e| CliError::config(format!("{}: {e}", params.display())))?;
            let phys = SignalSeries::parse_csv(&read(&physiology)?)
                .map_err(|e| CliError::config(format!("{}: {e}", physiology.display())))?;
            let report = pipeline::correlate(&rows, &phys, grid_hz.unwrap_or(cfg.correlation.grid_hz));
            let kv = correlation_kv(&report);
            write(&out.join("correlation.txt"), &kv)?;
            print!("{kv}");
        }
        Command::Pipeline => {
            let report = pipeline::run_pipeline(&cfg)?;
            println!(
                "{} of {} frames processed, {} dropped, {} windows; report in {}",
                report.frames_processed,
                report.frames_total,
                report.dropped.len(),
                report.windows,
                out.join("report.json").display()
            );
        }
        Command::GenScenario { spec } => {
            let mut spec: ScenarioSpec = match spec {
                Some(p) => toml::from_str(&read(&p)?).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
                None => ScenarioSpec::default(),
            };
            if let Some(seed) = cli.common.seed {
                spec.seed = seed;
            }
            let summary = generate_scenario(&spec, &out)?;
            println!(
                "{} frames, {} vehicles, {} points in {}",
                summary.frames,
                summary.vehicles,
                summary.points,
                out.display()
            );
        }
        Command::ServeOds { bind } => {
            let detector = build_detector(&cfg)?;
            let handle = spawn_ods(detector, &bind).map_err(|e| CliError::config(e.to_string()))?;
            println!("detection service listening on {}", handle.url());
            handle.wait();
        }
        Command::ServeMots { bind } => {
            let handle = spawn_mots(&bind).map_err(|e| CliError::config(e.to_string()))?;
            println!("tracking service listening on {}", handle.url());
            handle.wait();
        }
        Command::Plot { report, physiology } => {
            let path = report.unwrap_or_else(|| out.join("report.json"));
            let report: RunReport = serde_json::from_str(&read(&path)?)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let phys_path = physiology.or(cfg.input.physiology.clone());
            let phys = match phys_path {
                Some(p) if p.is_file() => Some(
                    SignalSeries::parse_csv(&read(&p)?).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
                ),
                _ => None,
            };
            let res = emit_plots(&report, phys.as_ref(), &out.join("plots")).map_err(|e| CliError::stage("plot", None, e))?;
            for n in &res.notices {
                println!("notice: {n}");
            }
            println!("{} plot files written", res.files.len());
        }
    }
    Ok(())
}
