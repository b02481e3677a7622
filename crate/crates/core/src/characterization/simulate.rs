use serde::{Deserialize, Serialize};

use super::{idm_accel, CharacterizationError, IdmParams};

/// One car-following observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowSample {
    pub timestamp_us: i64,
    /// Follower speed, m/s.
    pub v: f64,
    /// Bumper-to-bumper gap, m.
    pub s: f64,
    /// Closing speed, follower minus leader, m/s.
    pub dv: f64,
    /// Follower acceleration, m/s^2.
    pub a_obs: f64,
}

/// Leader motion along the lane, position measured from its start point.
pub trait LeaderProfile {
    fn position(&self, t: f64) -> f64;
    fn speed(&self, t: f64) -> f64;
}

/// Leader that starts at `initial_speed` and then applies a sequence of
/// constant accelerations, each for a fixed duration, before cruising.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAccel {
    pub initial_speed: f64,
    /// (duration s, acceleration m/s^2)
    pub segments: Vec<(f64, f64)>,
}

impl PiecewiseAccel {
    pub fn constant(speed: f64) -> Self {
        Self {
            initial_speed: speed,
            segments: Vec::new(),
        }
    }

    /// Cruise/ramp pattern: hold each target speed for `hold_s`, moving
    /// between targets at `|accel|`.
    pub fn speed_steps(initial_speed: f64, targets: &[f64], hold_s: f64, accel: f64) -> Self {
        let mut segments = vec![(hold_s, 0.0)];
        let mut v = initial_speed;
        for &target in targets {
            let dv = target - v;
            if dv != 0.0 {
                segments.push((dv.abs() / accel.abs(), accel.abs() * dv.signum()));
            }
            segments.push((hold_s, 0.0));
            v = target;
        }
        Self {
            initial_speed,
            segments,
        }
    }

    fn state(&self, t: f64) -> (f64, f64) {
        let mut x = 0.0;
        let mut v = self.initial_speed;
        let mut remaining = t.max(0.0);
        for &(dur, acc) in &self.segments {
            let h = remaining.min(dur);
            x += v * h + 0.5 * acc * h * h;
            v += acc * h;
            remaining -= h;
            if remaining <= 0.0 {
                return (x, v);
            }
        }
        (x + v * remaining, v)
    }
}

impl LeaderProfile for PiecewiseAccel {
    fn position(&self, t: f64) -> f64 {
        self.state(t).0
    }

    fn speed(&self, t: f64) -> f64 {
        self.state(t).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerInit {
    pub v: f64,
    pub s: f64,
    pub t0_us: i64,
}

/// Follower acceleration with a standstill floor.
fn follower_accel(
    p: &IdmParams,
    leader: &dyn LeaderProfile,
    t: f64,
    x: f64,
    v: f64,
    step: usize,
) -> Result<f64, CharacterizationError> {
    let v = v.max(0.0);
    let s = leader.position(t) - x;
    let acc = idm_accel(p, v, s, v - leader.speed(t))
        .map_err(|_| CharacterizationError::Collision { step, gap: s })?;
    Ok(if v <= 0.0 { acc.max(0.0) } else { acc })
}

/// Integrates an IDM follower behind `leader` with classic fourth-order
/// Runge-Kutta steps. Sample `k` describes the state at `t0 + k * dt`,
/// before step `k` is taken.
pub fn simulate_follower(
    p: &IdmParams,
    leader: &dyn LeaderProfile,
    init: FollowerInit,
    dt_s: f64,
    steps: usize,
) -> Result<Vec<FollowSample>, CharacterizationError> {
    if !(dt_s > 0.0) {
        return Err(CharacterizationError::Domain("dt must be positive".into()));
    }
    if !(init.s > 0.0) {
        return Err(CharacterizationError::Domain("initial gap must be positive".into()));
    }
    let mut x = leader.position(0.0) - init.s;
    let mut v = init.v.max(0.0);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt_s;
        let s = leader.position(t) - x;
        if s <= 0.0 {
            return Err(CharacterizationError::Collision { step: k, gap: s });
        }
        let vl = leader.speed(t);
        let a_obs = follower_accel(p, leader, t, x, v, k)?;
        out.push(FollowSample {
            timestamp_us: init.t0_us + (t * 1e6).round() as i64,
            v,
            s,
            dv: v - vl,
            a_obs,
        });

        let f = |tt: f64, xx: f64, vv: f64| -> Result<(f64, f64), CharacterizationError> {
            Ok((vv.max(0.0), follower_accel(p, leader, tt, xx, vv, k)?))
        };
        let h = dt_s;
        let (k1x, k1v) = (v, a_obs);
        let (k2x, k2v) = f(t + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v)?;
        let (k3x, k3v) = f(t + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v)?;
        let (k4x, k4v) = f(t + h, x + h * k3x, v + h * k3v)?;
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v = (v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)).max(0.0);
    }
    Ok(out)
}
