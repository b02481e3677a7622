//! Point-cloud ingestion, sensor-profile decimation, rigid transforms,
//! ground removal, clustering and KITTI label filtering.

mod cluster;
mod ground;
mod kitti;
mod profile;
mod transform;

pub use cluster::cluster;
pub use ground::{remove_ground, signed_distance, GroundConfig, GroundMethod, GroundRemoval};
pub use kitti::{decimate_labels, parse_kitti_labels, Box3d, KittiLabel, VEHICLE_TYPES};
pub use profile::{decimate, intersect_profiles, ChannelMatch, SensorProfile};
pub use transform::{crop, rotate_z, Aabb};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("invalid cloud: {0}")]
    Invalid(String),
    #[error("invalid sensor profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub ring: u16,
    /// Elevation angle of the emitting laser, degrees.
    pub vertical_angle: f64,
}

impl Point {
    /// Builds a point whose vertical angle is derived from its position.
    pub fn new(x: f64, y: f64, z: f64, intensity: f64, ring: u16) -> Self {
        Self {
            x,
            y,
            z,
            intensity,
            ring,
            vertical_angle: elevation_deg(x, y, z),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.vertical_angle.is_finite()
            && (0.0..=255.0).contains(&self.intensity)
    }
}

pub fn elevation_deg(x: f64, y: f64, z: f64) -> f64 {
    z.atan2(x.hypot(y)).to_degrees()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub timestamp_us: i64,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(
        points: Vec<Point>,
        timestamp_us: i64,
        frame_id: impl Into<String>,
    ) -> Result<Self, PointCloudError> {
        let frame_id = frame_id.into();
        if timestamp_us <= 0 {
            return Err(PointCloudError::Invalid(format!(
                "timestamp_us must be positive, got {timestamp_us}"
            )));
        }
        if frame_id.is_empty() {
            return Err(PointCloudError::Invalid("empty frame_id".into()));
        }
        Ok(Self {
            points,
            timestamp_us,
            frame_id,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same metadata, different points.
    pub fn with_points(&self, points: Vec<Point>) -> Self {
        Self {
            points,
            timestamp_us: self.timestamp_us,
            frame_id: self.frame_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// Header `x,y,z,intensity,ring[,vertical_angle]`.
    Csv,
}

const REQUIRED_COLUMNS: [&str; 5] = ["x", "y", "z", "intensity", "ring"];

pub fn parse_frame(
    bytes: &[u8],
    format: CloudFormat,
    frame_id: &str,
    timestamp_us: i64,
) -> Result<PointCloud, PointCloudError> {
    match format {
        CloudFormat::Csv => parse_csv(bytes, frame_id, timestamp_us),
    }
}

fn parse_csv(bytes: &[u8], frame_id: &str, timestamp_us: i64) -> Result<PointCloud, PointCloudError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| PointCloudError::Schema(e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = find(name)
            .ok_or_else(|| PointCloudError::Schema(format!("missing required column `{name}`")))?;
    }
    let angle_col = find("vertical_angle");

    let mut points = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        // header is line 1
        let line = idx + 2;
        let record = record.map_err(|e| PointCloudError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let field = |col: usize| -> Result<f64, PointCloudError> {
            let raw = record.get(col).ok_or_else(|| PointCloudError::Parse {
                line,
                msg: format!("missing field {}", col + 1),
            })?;
            raw.parse::<f64>().map_err(|_| PointCloudError::Parse {
                line,
                msg: format!("`{raw}` is not a number"),
            })
        };
        let x = field(cols[0])?;
        let y = field(cols[1])?;
        let z = field(cols[2])?;
        let intensity = field(cols[3])?;
        let ring_raw = record.get(cols[4]).unwrap_or_default();
        let ring: u16 = ring_raw.parse().map_err(|_| PointCloudError::Parse {
            line,
            msg: format!("ring `{ring_raw}` is not a non-negative integer"),
        })?;
        let vertical_angle = match angle_col {
            Some(c) if !record.get(c).unwrap_or_default().is_empty() => field(c)?,
            _ => elevation_deg(x, y, z),
        };
        let p = Point {
            x,
            y,
            z,
            intensity,
            ring,
            vertical_angle,
        };
        if !(0.0..=255.0).contains(&intensity) {
            return Err(PointCloudError::Schema(format!(
                "line {line}: intensity {intensity} outside [0, 255]"
            )));
        }
        if !p.is_valid() {
            return Err(PointCloudError::Schema(format!("line {line}: non-finite coordinate")));
        }
        points.push(p);
    }
    PointCloud::new(points, timestamp_us, frame_id)
}

pub fn write_csv<W: Write>(cloud: &PointCloud, mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,y,z,intensity,ring,vertical_angle")?;
    for p in &cloud.points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.x, p.y, p.z, p.intensity, p.ring, p.vertical_angle
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "x,y,z,intensity,ring,vertical_angle\n";

    #[test]
    fn single_row_maps_fields() {
        let data = format!("{HEADER}1.0,2.0,0.5,100,3,-9.0\n");
        let cloud = parse_frame(data.as_bytes(), CloudFormat::Csv, "f0", 1).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points[0];
        assert_eq!((p.x, p.y, p.z), (1.0, 2.0, 0.5));
        assert_eq!(p.intensity, 100.0);
        assert_eq!(p.ring, 3);
        assert_eq!(p.vertical_angle, -9.0);
    }

    #[test]
    fn empty_data_section_is_empty_cloud() {
        let cloud = parse_frame(HEADER.as_bytes(), CloudFormat::Csv, "f0", 1).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn intensity_out_of_range_is_schema_error() {
        let data = format!("{HEADER}1.0,2.0,0.5,300,3,-9.0\n");
        let err = parse_frame(data.as_bytes(), CloudFormat::Csv, "f0", 1).unwrap_err();
        assert!(matches!(err, PointCloudError::Schema(_)), "{err}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let data = "x,y,z,ring\n1,2,3,4\n";
        let err = parse_frame(data.as_bytes(), CloudFormat::Csv, "f0", 1).unwrap_err();
        assert!(matches!(err, PointCloudError::Schema(ref m) if m.contains("intensity")));
    }

    #[test]
    fn malformed_row_names_line() {
        let data = format!("{HEADER}1,2,3,4,0,0\n1,abc,3,4,0,0\n");
        let err = parse_frame(data.as_bytes(), CloudFormat::Csv, "f0", 1).unwrap_err();
        assert!(matches!(err, PointCloudError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn vertical_angle_is_optional() {
        let data = "x,y,z,intensity,ring\n10,0,10,0,1\n";
        let cloud = parse_frame(data.as_bytes(), CloudFormat::Csv, "f0", 1).unwrap();
        assert!((cloud.points[0].vertical_angle - 45.0).abs() < 1e-12);
    }

    #[test]
    fn csv_writer_round_trips() {
        let cloud = PointCloud::new(
            vec![Point::new(1.25, -3.5, 0.125, 42.0, 7), Point::new(0.1, 0.2, 0.3, 255.0, 0)],
            5,
            "abc",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&cloud, &mut buf).unwrap();
        let back = parse_frame(&buf, CloudFormat::Csv, "abc", 5).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn cloud_rejects_bad_metadata() {
        assert!(PointCloud::new(vec![], 0, "a").is_err());
        assert!(PointCloud::new(vec![], 1, "").is_err());
    }
}
