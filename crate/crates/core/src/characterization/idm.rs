use serde::{Deserialize, Serialize};

use super::CharacterizationError;

/// Free-road acceleration exponent.
pub const DEFAULT_DELTA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Minimum standstill spacing, m.
    pub s0: f64,
    /// Desired free-flow speed, m/s.
    pub v0: f64,
    /// Safe time headway, s.
    #[serde(rename = "T")]
    pub time_headway: f64,
    /// Maximum acceleration, m/s^2.
    pub a: f64,
    /// Comfortable deceleration, m/s^2.
    pub b: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl IdmParams {
    pub fn new(s0: f64, v0: f64, time_headway: f64, a: f64, b: f64) -> Self {
        Self {
            s0,
            v0,
            time_headway,
            a,
            b,
            delta: DEFAULT_DELTA,
        }
    }

    pub const NAMES: [&'static str; 5] = ["s0", "v0", "T", "a", "b"];

    pub fn to_array(&self) -> [f64; 5] {
        [self.s0, self.v0, self.time_headway, self.a, self.b]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_positive(&self) -> bool {
        self.to_array().iter().all(|x| *x > 0.0 && x.is_finite())
    }
}

/// Box constraints for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: [f64; 5],
    pub upper: [f64; 5],
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            lower: [0.5, 1.0, 0.1, 0.1, 0.1],
            upper: [10.0, 60.0, 5.0, 5.0, 5.0],
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<(), CharacterizationError> {
        for i in 0..5 {
            if !(self.lower[i] > 0.0 && self.lower[i] < self.upper[i]) {
                return Err(CharacterizationError::Domain(format!(
                    "bounds for {} must satisfy 0 < lower < upper",
                    IdmParams::NAMES[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &IdmParams) -> bool {
        let v = p.to_array();
        (0..5).all(|i| self.lower[i] <= v[i] && v[i] <= self.upper[i])
    }

    pub fn to_unit(&self, p: &IdmParams) -> [f64; 5] {
        let v = p.to_array();
        std::array::from_fn(|i| (v[i] - self.lower[i]) / (self.upper[i] - self.lower[i]))
    }

    pub fn from_unit(&self, u: &[f64; 5]) -> IdmParams {
        IdmParams::from_array(std::array::from_fn(|i| {
            self.lower[i] + u[i].clamp(0.0, 1.0) * (self.upper[i] - self.lower[i])
        }))
    }
}

/// Desired dynamic gap s*, never negative.
pub fn desired_gap(p: &IdmParams, v: f64, dv: f64) -> f64 {
    p.s0 + (v * p.time_headway + v * dv / (2.0 * (p.a * p.b).sqrt())).max(0.0)
}

/// IDM acceleration for speed `v`, gap `s` and closing speed `dv`.
pub fn idm_accel(p: &IdmParams, v: f64, s: f64, dv: f64) -> Result<f64, CharacterizationError> {
    if !(s > 0.0) {
        return Err(CharacterizationError::Domain(format!("gap must be positive, got {s}")));
    }
    let free = (v / p.v0).powf(p.delta);
    let interaction = desired_gap(p, v, dv) / s;
    Ok(p.a * (1.0 - free - interaction * interaction))
}

/// Steady-state gap behind a leader cruising at `v`.
pub fn equilibrium_gap(p: &IdmParams, v: f64) -> f64 {
    desired_gap(p, v, 0.0) / (1.0 - (v / p.v0).powf(p.delta)).sqrt()
}
