use serde::{Deserialize, Serialize};

use super::{PointCloud, PointCloudError};

/// Vertical channel layout of a spinning lidar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub name: String,
    /// Elevation of each laser in degrees, strictly increasing.
    pub channel_angles: Vec<f64>,
    pub vfov_min: f64,
    pub vfov_max: f64,
}

impl SensorProfile {
    pub fn new(
        name: impl Into<String>,
        channel_angles: Vec<f64>,
        vfov_min: f64,
        vfov_max: f64,
    ) -> Result<Self, PointCloudError> {
        let name = name.into();
        if !(vfov_min < vfov_max) {
            return Err(PointCloudError::Profile(format!(
                "{name}: vfov_min {vfov_min} must be below vfov_max {vfov_max}"
            )));
        }
        if channel_angles.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(PointCloudError::Profile(format!(
                "{name}: channel angles must be strictly increasing"
            )));
        }
        if let Some(a) = channel_angles.iter().find(|a| !(vfov_min..=vfov_max).contains(*a)) {
            return Err(PointCloudError::Profile(format!(
                "{name}: channel angle {a} outside vFOV [{vfov_min}, {vfov_max}]"
            )));
        }
        Ok(Self {
            name,
            channel_angles,
            vfov_min,
            vfov_max,
        })
    }

    /// 16-channel unit, -15..+15 degrees in 2 degree steps.
    pub fn puck() -> Self {
        let angles = (0..16).map(|i| -15.0 + 2.0 * i as f64).collect();
        Self::new("VLP-16", angles, -15.0, 15.0).expect("static profile")
    }

    /// 64-channel unit, modeled as evenly spaced lasers over [-24.9, +2.0].
    pub fn hdl64e() -> Self {
        let (lo, hi) = (-24.9, 2.0);
        let step = (hi - lo) / 63.0;
        let angles = (0..64).map(|i| lo + step * i as f64).collect();
        Self::new("HDL-64E", angles, lo, hi).expect("static profile")
    }

    pub fn len(&self) -> usize {
        self.channel_angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_angles.is_empty()
    }

    /// Index of the channel closest to `angle`; ties go to the lower channel.
    pub fn nearest_channel(&self, angle: f64) -> Option<usize> {
        self.channel_angles
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - angle).abs().total_cmp(&(*b - angle).abs()))
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatch {
    pub target_index: usize,
    pub target_angle: f64,
    pub source_index: usize,
    pub source_angle: f64,
}

/// Target channels that fall inside the source vFOV, each paired with the
/// nearest source laser. Sorted by target angle.
///
/// Decimating a dense `source` recording to mimic a sparser `target` sensor
/// keeps the source lasers named in the result.
pub fn intersect_profiles(source: &SensorProfile, target: &SensorProfile) -> Vec<ChannelMatch> {
    let mut out: Vec<ChannelMatch> = target
        .channel_angles
        .iter()
        .enumerate()
        .filter(|(_, a)| (source.vfov_min..=source.vfov_max).contains(*a))
        .filter_map(|(ti, &ta)| {
            source.nearest_channel(ta).map(|si| ChannelMatch {
                target_index: ti,
                target_angle: ta,
                source_index: si,
                source_angle: source.channel_angles[si],
            })
        })
        .collect();
    out.sort_by(|a, b| a.target_angle.total_cmp(&b.target_angle));
    out
}

/// Keeps the points whose vertical angle lies within `tol_deg` of one of
/// `channel_angles`.
pub fn decimate(cloud: &PointCloud, channel_angles: &[f64], tol_deg: f64) -> PointCloud {
    assert!(tol_deg > 0.0, "tolerance must be positive");
    let points = cloud
        .points
        .iter()
        .filter(|p| {
            channel_angles
                .iter()
                .any(|a| (p.vertical_angle - a).abs() <= tol_deg)
        })
        .copied()
        .collect();
    cloud.with_points(points)
}
