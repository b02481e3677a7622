//! Bounded multi-start Nelder-Mead fit of IDM parameters.
//!
//! The search runs in unit-cube coordinates, one axis per parameter, with
//! every trial point projected back onto the cube. Each start is refined by
//! restarting the simplex around its own optimum until the objective stops
//! improving, which avoids the usual premature collapse of the simplex.

use std::fmt;

use nalgebra::{SMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{idm_accel, CharacterizationError, FollowSample, IdmParams, ParamBounds};

const DIM: usize = 5;
type Pt = [f64; DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub min_samples: usize,
    pub starts: usize,
    pub seed: u64,
    /// Objective evaluations per simplex run.
    pub max_evals: usize,
    /// Simplex restarts around the incumbent for each start.
    pub max_restarts: usize,
    /// Relative objective change that ends the restart loop.
    pub rel_tol: f64,
    /// Hessian eigenvalue ratio under which the fit is flagged.
    pub identifiability_ratio: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_samples: 20,
            starts: 8,
            seed: 0,
            max_evals: 4000,
            max_restarts: 12,
            rel_tol: 1e-12,
            identifiability_ratio: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// No start improved on its initial point.
    NoImprovement,
    /// The objective is flat along some direction at the optimum.
    NonIdentifiable,
    /// Window skipped for lack of samples.
    InsufficientData,
}

impl fmt::Display for FitFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFlag::NoImprovement => "no_improvement",
            FitFlag::NonIdentifiable => "non_identifiable",
            FitFlag::InsufficientData => "insufficient_data",
        })
    }
}

impl std::str::FromStr for FitFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_improvement" => Ok(FitFlag::NoImprovement),
            "non_identifiable" => Ok(FitFlag::NonIdentifiable),
            "insufficient_data" => Ok(FitFlag::InsufficientData),
            other => Err(format!("unknown flag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: IdmParams,
    pub sse: f64,
    pub flags: Vec<FitFlag>,
    /// Objective value at each start point, in start order.
    pub start_sse: Vec<f64>,
}

fn objective(p: &IdmParams, window: &[FollowSample]) -> f64 {
    window
        .iter()
        .map(|s| match idm_accel(p, s.v, s.s, s.dv) {
            Ok(a) => (s.a_obs - a).powi(2),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

fn project(u: &mut Pt) {
    for x in u.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
}

fn nelder_mead(f: &dyn Fn(&Pt) -> f64, start: Pt, scale: f64, max_evals: usize) -> (Pt, f64) {
    let mut simplex: Vec<(Pt, f64)> = Vec::with_capacity(DIM + 1);
    simplex.push((start, f(&start)));
    for i in 0..DIM {
        let mut p = start;
        // step inward when the start sits on the upper face
        p[i] += if p[i] + scale <= 1.0 { scale } else { -scale };
        project(&mut p);
        simplex.push((p, f(&p)));
    }
    let mut evals = DIM + 1;
    let eval = |p: &Pt, evals: &mut usize| {
        *evals += 1;
        f(p)
    };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[DIM].1;
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(p, _)| (0..DIM).map(|i| (p[i] - simplex[0].0[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < 1e-14 || (worst - best).abs() <= 1e-300 {
            break;
        }
        let mut centroid = [0.0; DIM];
        for (p, _) in &simplex[..DIM] {
            for i in 0..DIM {
                centroid[i] += p[i] / DIM as f64;
            }
        }
        let along = |t: f64| -> Pt {
            let mut p = [0.0; DIM];
            for i in 0..DIM {
                p[i] = centroid[i] + t * (simplex[DIM].0[i] - centroid[i]);
            }
            project(&mut p);
            p
        };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[DIM] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let x = along(-0.5);
            (x, eval(&x, &mut evals))
        } else {
            let x = along(0.5);
            (x, eval(&x, &mut evals))
        };
        if fc < fr.min(worst) {
            simplex[DIM] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0;
        for entry in simplex.iter_mut().skip(1) {
            let mut p = [0.0; DIM];
            for i in 0..DIM {
                p[i] = x0[i] + 0.5 * (entry.0[i] - x0[i]);
            }
            entry.1 = eval(&p, &mut evals);
            entry.0 = p;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Smallest-to-largest eigenvalue ratio of the objective Hessian at `u`.
fn curvature_ratio(f: &dyn Fn(&Pt) -> f64, u: &Pt) -> f64 {
    let h = 1e-4;
    // keep the stencil inside the cube
    let mut c = *u;
    for x in c.iter_mut() {
        *x = x.clamp(2.0 * h, 1.0 - 2.0 * h);
    }
    let at = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut p = c;
        p[di] += si * h;
        p[dj] += sj * h;
        f(&p)
    };
    let f0 = f(&c);
    let mut hess = SMatrix::<f64, DIM, DIM>::zeros();
    for i in 0..DIM {
        for j in i..DIM {
            let v = if i == j {
                let mut pp = c;
                pp[i] += h;
                let mut pm = c;
                pm[i] -= h;
                (f(&pp) - 2.0 * f0 + f(&pm)) / (h * h)
            } else {
                (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0))
                    / (4.0 * h * h)
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(hess).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(max > 0.0) || !max.is_finite() {
        return 0.0;
    }
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    min.max(0.0) / max
}

/// Least-squares IDM fit of the acceleration residuals in `window`.
pub fn fit_idm(
    window: &[FollowSample],
    bounds: &ParamBounds,
    cfg: &FitConfig,
) -> Result<FitResult, CharacterizationError> {
    bounds.validate()?;
    if window.len() < cfg.min_samples.max(1) {
        return Err(CharacterizationError::InsufficientData {
            needed: cfg.min_samples.max(1),
            got: window.len(),
        });
    }
    if window.iter().any(|s| !(s.s > 0.0)) {
        return Err(CharacterizationError::Domain("gaps must be positive".into()));
    }
    let f = |u: &Pt| objective(&bounds.from_unit(u), window);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Pt, f64)> = None;
    let mut start_sse = Vec::with_capacity(cfg.starts);
    let mut improved_any = false;
    for k in 0..cfg.starts.max(1) {
        let start: Pt = if k == 0 {
            [0.5; DIM]
        } else {
            std::array::from_fn(|_| rng.random_range(0.05..0.95))
        };
        let f_start = f(&start);
        start_sse.push(f_start);
        let (mut u, mut fu) = nelder_mead(&f, start, 0.1, cfg.max_evals);
        for _ in 0..cfg.max_restarts {
            let (u2, f2) = nelder_mead(&f, u, 0.02, cfg.max_evals);
            let gain = fu - f2;
            if f2 < fu {
                u = u2;
                fu = f2;
            }
            if !(gain > cfg.rel_tol * fu.abs().max(1e-300)) {
                break;
            }
        }
        if fu < f_start {
            improved_any = true;
        }
        if best.is_none_or(|(_, fb)| fu < fb) {
            best = Some((u, fu));
        }
    }
    let (u, _) = best.expect("at least one start");
    let mut flags = Vec::new();
    if !improved_any {
        flags.push(FitFlag::NoImprovement);
    }
    if curvature_ratio(&f, &u) < cfg.identifiability_ratio {
        flags.push(FitFlag::NonIdentifiable);
    }
    let params = bounds.from_unit(&u);
    Ok(FitResult {
        params,
        sse: objective(&params, window),
        flags,
        start_sse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characterization::{simulate_follower, FollowerInit, PiecewiseAccel};

    fn truth() -> IdmParams {
        IdmParams::new(2.0, 30.0, 1.5, 1.0, 2.0)
    }

    fn excited() -> Vec<FollowSample> {
        let leader = PiecewiseAccel::speed_steps(12.0, &[24.0, 6.0, 26.0, 10.0], 6.0, 1.5);
        let init = FollowerInit { v: 20.0, s: 20.0, t0_us: 0 };
        simulate_follower(&truth(), &leader, init, 0.1, 600).unwrap()
    }

    #[test]
    fn too_short_window() {
        let w = excited();
        let err = fit_idm(&w[..10], &ParamBounds::default(), &FitConfig::default()).unwrap_err();
        assert_eq!(err, CharacterizationError::InsufficientData { needed: 20, got: 10 });
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let fit = fit_idm(&excited(), &ParamBounds::default(), &FitConfig::default()).unwrap();
        let got = fit.params.to_array();
        for (g, t) in got.iter().zip(truth().to_array()) {
            assert!(((g - t) / t).abs() < 0.05, "{got:?}");
        }
        assert!(fit.start_sse.iter().all(|s| fit.sse <= *s));
        assert!(!fit.flags.contains(&FitFlag::NonIdentifiable), "{:?}", fit.flags);
    }

    #[test]
    fn recovers_parameters_under_accel_noise() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let noisy: Vec<FollowSample> = excited()
            .into_iter()
            .map(|s| FollowSample { a_obs: s.a_obs + noise.sample(&mut rng), ..s })
            .collect();
        let fit = fit_idm(&noisy, &ParamBounds::default(), &FitConfig::default()).unwrap();
        let got = fit.params.to_array();
        for (g, t) in got.iter().zip(truth().to_array()) {
            assert!(((g - t) / t).abs() < 0.15, "{got:?}");
        }
    }

    #[test]
    fn flat_window_is_flagged() {
        let s = FollowSample {
            timestamp_us: 0,
            v: 15.0,
            s: 30.0,
            dv: 0.0,
            a_obs: 0.1,
        };
        let window: Vec<FollowSample> = (0..40).map(|k| FollowSample { timestamp_us: k, ..s }).collect();
        let fit = fit_idm(&window, &ParamBounds::default(), &FitConfig::default()).unwrap();
        assert!(fit.flags.contains(&FitFlag::NonIdentifiable), "{:?}", fit.flags);
    }
}
