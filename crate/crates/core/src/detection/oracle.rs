use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{rotate_detection, DetectError, Detection, Detector, ObjectClass};
use crate::bevmap::BevMap;
use crate::geometry::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub pos_sigma_m: f64,
    pub yaw_sigma_rad: f64,
    pub extent_sigma_m: f64,
    /// Probability of dropping a visible object.
    pub fn_rate: f64,
    /// Probability that each spurious slot yields a false positive.
    pub fp_rate: f64,
    pub fp_slots: usize,
    /// Occupied cells a box footprint must touch to be seen.
    pub min_occupied_cells: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            pos_sigma_m: 0.0,
            yaw_sigma_rad: 0.0,
            extent_sigma_m: 0.0,
            fn_rate: 0.0,
            fp_rate: 0.0,
            fp_slots: 0,
            min_occupied_cells: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Truth {
    Static(Vec<Detection>),
    PerFrame(BTreeMap<String, Vec<Detection>>),
}

/// Detector that reports known boxes, in ego coordinates, when the map shows
/// returns inside their footprint.
///
/// Boxes are transformed into the frame of the map being processed, so the
/// oracle works on full maps and on either half. Noise, misses and false
/// positives are drawn from a generator seeded by the configured seed, the
/// frame id and the map half, which keeps repeated calls identical.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    truth: Truth,
    config: OracleConfig,
}

impl OracleDetector {
    /// Same boxes for every frame.
    pub fn fixed(truth: Vec<Detection>, config: OracleConfig) -> Self {
        Self {
            truth: Truth::Static(truth),
            config,
        }
    }

    /// Boxes keyed by frame id; unknown frames yield no truth.
    pub fn per_frame(truth: BTreeMap<String, Vec<Detection>>, config: OracleConfig) -> Self {
        Self {
            truth: Truth::PerFrame(truth),
            config,
        }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    fn truth_for(&self, frame_id: &str) -> &[Detection] {
        match &self.truth {
            Truth::Static(v) => v,
            Truth::PerFrame(m) => m.get(frame_id).map(Vec::as_slice).unwrap_or(&[]),
        }
    }

    fn rng_for(&self, map: &BevMap) -> ChaCha8Rng {
        // FNV-1a over the frame id, mixed with the seed and the half
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in map.frame_id.bytes().chain(map.half.to_string().bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(h ^ self.config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// Number of occupied cells whose centers fall inside `bbox` grown by one cell.
pub(crate) fn occupied_cells_under(map: &BevMap, bbox: &OrientedBox) -> usize {
    let cell = map.config.cell_size();
    let grown = OrientedBox {
        w: bbox.w + 2.0 * cell,
        l: bbox.l + 2.0 * cell,
        ..*bbox
    };
    let reach = grown.radius();
    let r = map.config.extent_m;
    let row_lo = (((r - (grown.cx + reach)) / cell).floor().max(0.0)) as usize;
    let row_hi = ((r - (grown.cx - reach)) / cell).floor();
    let col_lo = (((r - (grown.cy + reach)) / cell).floor().max(0.0)) as usize;
    let col_hi = ((r - (grown.cy - reach)) / cell).floor();
    if row_hi < 0.0 || col_hi < 0.0 {
        return 0;
    }
    let row_hi = (row_hi as usize).min(map.rows - 1);
    let col_hi = (col_hi as usize).min(map.cols - 1);
    let mut n = 0;
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            if !map.is_occupied(row, col) {
                continue;
            }
            let (x, y) = map.cell_center(row, col);
            if grown.contains(x, y) {
                n += 1;
            }
        }
    }
    n
}

impl Detector for OracleDetector {
    fn detect(&self, map: &BevMap) -> Result<Vec<Detection>, DetectError> {
        let cfg = &self.config;
        let mut rng = self.rng_for(map);
        let to_map = -map.half.frame_rotation();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::new();
        for truth in self.truth_for(&map.frame_id) {
            let local = rotate_detection(truth, to_map);
            // draws happen for every box so visibility does not shift the stream
            let miss: f64 = rng.random();
            let noise: [f64; 5] = std::array::from_fn(|_| std_normal.sample(&mut rng));
            if occupied_cells_under(map, &local.bbox) < cfg.min_occupied_cells.max(1) {
                continue;
            }
            if miss < cfg.fn_rate {
                continue;
            }
            let b = local.bbox;
            out.push(Detection {
                bbox: OrientedBox::new(
                    b.cx + cfg.pos_sigma_m * noise[0],
                    b.cy + cfg.pos_sigma_m * noise[1],
                    (b.w + cfg.extent_sigma_m * noise[2]).max(0.1),
                    (b.l + cfg.extent_sigma_m * noise[3]).max(0.1),
                    b.yaw + cfg.yaw_sigma_rad * noise[4],
                ),
                ..local
            });
        }
        let r = map.config.extent_m;
        let x_lo = r - map.rows as f64 * map.config.cell_size();
        for _ in 0..cfg.fp_slots {
            let hit: f64 = rng.random();
            let x = rng.random_range(x_lo..r);
            let y = rng.random_range(-r..r);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            if hit < cfg.fp_rate {
                out.push(Detection::new(
                    ObjectClass::Car,
                    OrientedBox::new(x, y, 1.8, 4.5, yaw),
                    0.3,
                ));
            }
        }
        Ok(out)
    }
}
