//! Top-view raster maps with height, intensity and density channels.
//!
//! Grid convention: row 0 is the most-forward strip (x = +R), column 0 the
//! left-most strip (y = +R). A cell index is `floor((R - coord) / cell)`;
//! the closed lower boundary (coord = -R) would index past the grid and is
//! clamped onto the last row/column.
//!
//! Half maps cut from a full map reuse the same formula in their own frame:
//! the front half is the ego frame restricted to x >= 0, the rotated rear half
//! is the ego frame turned by pi, so it also presents as a forward half.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::PointCloud;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("invalid grid: {0}")]
    Config(String),
    #[error("({x}, {y}) lies outside the map")]
    OutOfRange { x: f64, y: f64 },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("png: {0}")]
    Png(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Half-width R; the map covers x, y in [-R, R].
    pub extent_m: f64,
    pub cells_per_side: usize,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            extent_m: 40.0,
            cells_per_side: 608,
            z_min: -2.0,
            z_max: 1.25,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.extent_m > 0.0 && self.extent_m.is_finite()) {
            return Err(MapError::Config(format!("extent_m must be positive, got {}", self.extent_m)));
        }
        if self.cells_per_side < 2 {
            return Err(MapError::Config(format!(
                "cells_per_side must be at least 2, got {}",
                self.cells_per_side
            )));
        }
        if !(self.z_min < self.z_max) {
            return Err(MapError::Config(format!(
                "z_min {} must be below z_max {}",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.extent_m / self.cells_per_side as f64
    }

    fn index(&self, coord: f64) -> Option<usize> {
        let r = self.extent_m;
        if !(-r..=r).contains(&coord) {
            return None;
        }
        let i = ((r - coord) / self.cell_size()).floor() as usize;
        Some(i.min(self.cells_per_side - 1))
    }

    /// Full-grid cell containing `(x, y)`.
    pub fn meters_to_cell(&self, x: f64, y: f64) -> Result<(usize, usize), MapError> {
        match (self.index(x), self.index(y)) {
            (Some(row), Some(col)) => Ok((row, col)),
            _ => Err(MapError::OutOfRange { x, y }),
        }
    }

    /// Center of a full-grid cell.
    pub fn cell_to_meters(&self, row: usize, col: usize) -> (f64, f64) {
        let c = self.cell_size();
        (
            self.extent_m - (row as f64 + 0.5) * c,
            self.extent_m - (col as f64 + 0.5) * c,
        )
    }
}

/// Which part of the scene a map covers, and in which frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapHalf {
    Full,
    Front,
    /// Rear half, turned by pi so it faces forward.
    RearRotated,
}

impl MapHalf {
    /// Rotation taking map-frame coordinates back to the ego frame.
    pub fn frame_rotation(self) -> f64 {
        match self {
            MapHalf::RearRotated => PI,
            _ => 0.0,
        }
    }
}

impl fmt::Display for MapHalf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapHalf::Full => "full",
            MapHalf::Front => "front",
            MapHalf::RearRotated => "rear_rotated",
        })
    }
}

impl FromStr for MapHalf {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(MapHalf::Full),
            "front" => Ok(MapHalf::Front),
            "rear_rotated" => Ok(MapHalf::RearRotated),
            other => Err(MapError::Metadata(format!("unknown half `{other}`"))),
        }
    }
}

/// Geo-referencing record that travels with every exported map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub extent_m: f64,
    pub cells_per_side: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub timestamp_us: i64,
    pub frame_id: String,
    #[serde(default = "full_half")]
    pub half: MapHalf,
    /// Rows actually present; defaults to `cells_per_side`.
    #[serde(default)]
    pub rows: Option<usize>,
}

fn full_half() -> MapHalf {
    MapHalf::Full
}

impl MapMeta {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            extent_m: self.extent_m,
            cells_per_side: self.cells_per_side,
            z_min: self.z_min,
            z_max: self.z_max,
        }
    }

    /// `key=value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "extent_m={}\ncells_per_side={}\nz_min={}\nz_max={}\ntimestamp_us={}\nframe_id={}\nhalf={}\n",
            self.extent_m, self.cells_per_side, self.z_min, self.z_max, self.timestamp_us, self.frame_id, self.half
        );
        if let Some(rows) = self.rows {
            s.push_str(&format!("rows={rows}\n"));
        }
        s
    }

    pub fn from_kv(text: &str) -> Result<Self, MapError> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MapError::Metadata(format!("expected key=value, got `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn take<T: FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T, MapError> {
            let raw = kv
                .get(key)
                .ok_or_else(|| MapError::Metadata(format!("missing `{key}`")))?;
            raw.parse()
                .map_err(|_| MapError::Metadata(format!("bad value for `{key}`: `{raw}`")))
        }
        Ok(Self {
            extent_m: take(&kv, "extent_m")?,
            cells_per_side: take(&kv, "cells_per_side")?,
            z_min: take(&kv, "z_min")?,
            z_max: take(&kv, "z_max")?,
            timestamp_us: take(&kv, "timestamp_us")?,
            frame_id: take(&kv, "frame_id")?,
            half: match kv.get("half") {
                Some(h) => h.parse()?,
                None => MapHalf::Full,
            },
            rows: match kv.get("rows") {
                Some(_) => Some(take(&kv, "rows")?),
                None => None,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    pub config: GridConfig,
    pub half: MapHalf,
    pub rows: usize,
    pub cols: usize,
    pub height: Vec<f32>,
    pub intensity: Vec<f32>,
    pub density: Vec<f32>,
    pub timestamp_us: i64,
    pub frame_id: String,
}

const DENSITY_SATURATION: f64 = 64.0;

/// Rasterizes a cloud into a full top-view map.
pub fn make_frgb(cloud: &PointCloud, config: &GridConfig) -> Result<BevMap, MapError> {
    config.validate()?;
    let n = config.cells_per_side;
    let mut max_z = vec![f64::NEG_INFINITY; n * n];
    let mut max_i = vec![0.0f64; n * n];
    let mut count = vec![0u32; n * n];
    for p in &cloud.points {
        if p.z < config.z_min || p.z > config.z_max {
            continue;
        }
        let Ok((row, col)) = config.meters_to_cell(p.x, p.y) else {
            continue;
        };
        let k = row * n + col;
        max_z[k] = max_z[k].max(p.z);
        max_i[k] = max_i[k].max(p.intensity);
        count[k] += 1;
    }
    let span = config.z_max - config.z_min;
    let log_sat = DENSITY_SATURATION.ln();
    let mut map = BevMap::empty(config, MapHalf::Full, n, cloud.timestamp_us, &cloud.frame_id);
    for k in 0..n * n {
        if count[k] == 0 {
            continue;
        }
        map.height[k] = ((max_z[k] - config.z_min) / span).clamp(0.0, 1.0) as f32;
        map.intensity[k] = (max_i[k] / 255.0).clamp(0.0, 1.0) as f32;
        map.density[k] = ((1.0 + count[k] as f64).ln() / log_sat).min(1.0) as f32;
    }
    Ok(map)
}

impl BevMap {
    pub fn empty(config: &GridConfig, half: MapHalf, rows: usize, timestamp_us: i64, frame_id: &str) -> Self {
        let cols = config.cells_per_side;
        Self {
            config: *config,
            half,
            rows,
            cols,
            height: vec![0.0; rows * cols],
            intensity: vec![0.0; rows * cols],
            density: vec![0.0; rows * cols],
            timestamp_us,
            frame_id: frame_id.to_string(),
        }
    }

    pub fn meta(&self) -> MapMeta {
        MapMeta {
            extent_m: self.config.extent_m,
            cells_per_side: self.config.cells_per_side,
            z_min: self.config.z_min,
            z_max: self.config.z_max,
            timestamp_us: self.timestamp_us,
            frame_id: self.frame_id.clone(),
            half: self.half,
            rows: Some(self.rows),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> [f32; 3] {
        let k = row * self.cols + col;
        [self.height[k], self.intensity[k], self.density[k]]
    }

    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.density[row * self.cols + col] > 0.0
    }

    pub fn occupied_cells(&self) -> usize {
        self.density.iter().filter(|d| **d > 0.0).count()
    }

    /// Cell holding map-frame coordinates `(x, y)`, if it is part of this map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let cfg = &self.config;
        let c = cfg.cell_size();
        let r = cfg.extent_m;
        if !(-r..=r).contains(&y) || x > r {
            return None;
        }
        let row_f = ((r - x) / c).floor();
        if row_f < 0.0 {
            return None;
        }
        let mut row = row_f as usize;
        if self.half == MapHalf::Full {
            row = row.min(self.rows - 1);
        } else if row >= self.rows {
            return None;
        }
        let col = (((r - y) / c).floor() as usize).min(self.cols - 1);
        Some((row, col))
    }

    /// Map-frame center of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        self.config.cell_to_meters(row, col)
    }

    /// Map rotated by pi in map space (full maps only).
    pub fn rotated_half_turn(&self) -> BevMap {
        let mut out = self.clone();
        let total = self.rows * self.cols;
        for k in 0..total {
            let j = total - 1 - k;
            out.height[k] = self.height[j];
            out.intensity[k] = self.intensity[j];
            out.density[k] = self.density[j];
        }
        out
    }

    /// Interleaved 8-bit RGB pixels, R=height, G=intensity, B=density.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut buf = Vec::with_capacity(self.rows * self.cols * 3);
        for k in 0..self.rows * self.cols {
            buf.extend_from_slice(&[q(self.height[k]), q(self.intensity[k]), q(self.density[k])]);
        }
        buf
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, MapError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.cols as u32, self.rows as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| MapError::Png(e.to_string()))?;
            writer
                .write_image_data(&self.to_rgb8())
                .map_err(|e| MapError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8], meta: &MapMeta) -> Result<BevMap, MapError> {
        let config = meta.grid();
        config.validate()?;
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(|e| MapError::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(|e| MapError::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(MapError::Png("expected 8-bit RGB".into()));
        }
        let rows = meta.rows.unwrap_or(config.cells_per_side);
        if info.width as usize != config.cells_per_side || info.height as usize != rows {
            return Err(MapError::Metadata(format!(
                "image is {}x{}, metadata says {}x{}",
                info.width, info.height, config.cells_per_side, rows
            )));
        }
        let mut map = BevMap::empty(&config, meta.half, rows, meta.timestamp_us, &meta.frame_id);
        let line = info.line_size;
        for r in 0..rows {
            for c in 0..map.cols {
                let o = r * line + 3 * c;
                let k = r * map.cols + c;
                map.height[k] = buf[o] as f32 / 255.0;
                map.intensity[k] = buf[o + 1] as f32 / 255.0;
                map.density[k] = buf[o + 2] as f32 / 255.0;
            }
        }
        Ok(map)
    }
}

/// Cuts a full map into the forward half and the rear half turned by pi.
///
/// `margin_cells` extra rows past the x = 0 seam are kept in both halves.
pub fn split_halves(map: &BevMap, margin_cells: usize) -> Result<(BevMap, BevMap), MapError> {
    let n = map.config.cells_per_side;
    if !n.is_multiple_of(2) {
        return Err(MapError::Config(format!("cells_per_side must be even, got {n}")));
    }
    if map.half != MapHalf::Full {
        return Err(MapError::Config("only full maps can be split".into()));
    }
    let rows = (n / 2 + margin_cells).min(n);
    let cols = map.cols;
    let mut front = BevMap::empty(&map.config, MapHalf::Front, rows, map.timestamp_us, &map.frame_id);
    let mut rear = BevMap::empty(&map.config, MapHalf::RearRotated, rows, map.timestamp_us, &map.frame_id);
    let len = rows * cols;
    front.height.copy_from_slice(&map.height[..len]);
    front.intensity.copy_from_slice(&map.intensity[..len]);
    front.density.copy_from_slice(&map.density[..len]);
    let total = n * cols;
    for k in 0..len {
        let j = total - 1 - k;
        rear.height[k] = map.height[j];
        rear.intensity[k] = map.intensity[j];
        rear.density[k] = map.density[j];
    }
    Ok((front, rear))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{rotate_z, Point};

    fn cfg() -> GridConfig {
        GridConfig {
            extent_m: 40.0,
            cells_per_side: 80,
            z_min: -2.0,
            z_max: 1.25,
        }
    }

    fn cloud(points: Vec<Point>) -> PointCloud {
        PointCloud::new(points, 10, "m").unwrap()
    }

    #[test]
    fn single_point_at_top_of_range() {
        let map = make_frgb(&cloud(vec![Point::new(0.0, 0.0, 1.25, 255.0, 0)]), &cfg()).unwrap();
        let (r, c) = cfg().meters_to_cell(0.0, 0.0).unwrap();
        let [h, i, d] = map.at(r, c);
        assert_eq!(h, 1.0);
        assert_eq!(i, 1.0);
        assert!((d as f64 - 2f64.ln() / 64f64.ln()).abs() < 1e-6);
        assert_eq!(map.occupied_cells(), 1);
    }

    #[test]
    fn empty_cloud_gives_zero_map() {
        let map = make_frgb(&cloud(vec![]), &cfg()).unwrap();
        assert!(map.height.iter().chain(&map.intensity).chain(&map.density).all(|v| *v == 0.0));
    }

    #[test]
    fn sixty_three_points_saturate_density() {
        let pts = vec![Point::new(5.1, 5.1, 0.0, 10.0, 0); 63];
        let map = make_frgb(&cloud(pts), &cfg()).unwrap();
        let (r, c) = cfg().meters_to_cell(5.1, 5.1).unwrap();
        assert_eq!(map.at(r, c)[2], 1.0);
    }

    #[test]
    fn out_of_range_points_are_ignored() {
        let pts = vec![
            Point::new(50.0, 0.0, 0.0, 10.0, 0),
            Point::new(1.0, 0.0, 3.0, 10.0, 0),
            Point::new(1.0, 0.0, -2.5, 10.0, 0),
        ];
        assert_eq!(make_frgb(&cloud(pts), &cfg()).unwrap().occupied_cells(), 0);
    }

    #[test]
    fn origin_maps_to_central_cell() {
        let g = cfg();
        assert_eq!(g.meters_to_cell(0.0, 0.0).unwrap(), (40, 40));
    }

    #[test]
    fn cell_round_trip() {
        let g = cfg();
        for row in 0..g.cells_per_side {
            for col in 0..g.cells_per_side {
                let (x, y) = g.cell_to_meters(row, col);
                assert_eq!(g.meters_to_cell(x, y).unwrap(), (row, col));
            }
        }
    }

    #[test]
    fn boundaries_clamp_and_reject() {
        let g = cfg();
        assert_eq!(g.meters_to_cell(40.0, 40.0).unwrap(), (0, 0));
        assert_eq!(g.meters_to_cell(-40.0, -40.0).unwrap(), (79, 79));
        assert!(matches!(g.meters_to_cell(40.1, 0.0), Err(MapError::OutOfRange { .. })));
    }

    #[test]
    fn front_point_only_in_front_half() {
        let map = make_frgb(&cloud(vec![Point::new(10.0, 0.0, 1.0, 10.0, 0)]), &cfg()).unwrap();
        let (front, rear) = split_halves(&map, 0).unwrap();
        assert_eq!(front.occupied_cells(), 1);
        assert_eq!(rear.occupied_cells(), 0);
        let (r, c) = front.cell_of(10.0, 0.0).unwrap();
        assert!(front.is_occupied(r, c));
        assert_eq!(front.rows, 40);
    }

    #[test]
    fn rear_point_appears_rotated() {
        let map = make_frgb(&cloud(vec![Point::new(-10.3, 2.2, 1.0, 10.0, 0)]), &cfg()).unwrap();
        let (front, rear) = split_halves(&map, 0).unwrap();
        assert_eq!(front.occupied_cells(), 0);
        let (r, c) = rear.cell_of(10.3, -2.2).unwrap();
        assert!(rear.is_occupied(r, c));
        assert_eq!(rear.half, MapHalf::RearRotated);
    }

    #[test]
    fn symmetric_scene_gives_identical_halves() {
        let pts = vec![Point::new(12.3, 0.2, 0.0, 10.0, 0), Point::new(-12.3, -0.2, 0.0, 10.0, 0)];
        let map = make_frgb(&cloud(pts), &cfg()).unwrap();
        let (front, rear) = split_halves(&map, 0).unwrap();
        assert_eq!(front.density, rear.density);
        assert_eq!(front.height, rear.height);
    }

    #[test]
    fn odd_grid_cannot_split() {
        let g = GridConfig {
            cells_per_side: 81,
            ..cfg()
        };
        let map = make_frgb(&cloud(vec![]), &g).unwrap();
        assert!(matches!(split_halves(&map, 0), Err(MapError::Config(_))));
    }

    #[test]
    fn half_turn_equivariance() {
        let pts: Vec<Point> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                Point::new(30.0 * t.sin(), 25.0 * (1.3 * t).cos(), -1.0 + (i % 7) as f64 * 0.3, (i % 255) as f64, 0)
            })
            .collect();
        let c = cloud(pts);
        let a = make_frgb(&rotate_z(&c, PI), &cfg()).unwrap();
        let b = make_frgb(&c, &cfg()).unwrap().rotated_half_turn();
        let differing = a.density.iter().zip(&b.density).filter(|(x, y)| x != y).count();
        assert!(differing <= 2 * 80, "{differing}");
    }

    #[test]
    fn png_and_metadata_round_trip() {
        let pts = vec![Point::new(3.0, -4.0, 0.5, 128.0, 0), Point::new(-20.0, 7.0, -1.0, 20.0, 0)];
        let map = make_frgb(&cloud(pts), &cfg()).unwrap();
        let (front, _) = split_halves(&map, 2).unwrap();
        let meta = MapMeta::from_kv(&front.meta().to_kv()).unwrap();
        assert_eq!(meta, front.meta());
        let back = BevMap::decode_png(&front.encode_png().unwrap(), &meta).unwrap();
        assert_eq!(back.rows, 42);
        for (a, b) in front.height.iter().zip(&back.height) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        assert_eq!(back.occupied_cells(), front.occupied_cells());
    }

    #[test]
    fn metadata_requires_grid_fields() {
        assert!(matches!(MapMeta::from_kv("frame_id=a\n"), Err(MapError::Metadata(_))));
    }
}
