//! Car-following parameter estimation and signal correlation.
//!
//! The forward model is the Intelligent Driver Model with the desired gap
//! clamped at zero from below. Parameters are fitted per time window by a
//! bounded multi-start Nelder-Mead search on the acceleration residuals, and
//! the resulting series can be correlated against any external signal.

mod accel;
mod fit;
mod idm;
mod pearson;
mod simulate;
mod sliding;

pub use accel::derive_accel;
pub use fit::{fit_idm, FitConfig, FitFlag, FitResult};
pub use idm::{desired_gap, equilibrium_gap, idm_accel, IdmParams, ParamBounds, DEFAULT_DELTA};
pub use pearson::{pearson, resample, SignalSeries};
pub use simulate::{simulate_follower, FollowSample, FollowerInit, LeaderProfile, PiecewiseAccel};
pub use sliding::{
    expected_window_count, parse_param_series, rows_to_csv, sliding_estimation, ParamRow, ParamSeries, SkippedWindow,
    WindowEstimate, PARAM_SERIES_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharacterizationError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: need {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("collision at step {step} (gap {gap} m)")]
    Collision { step: usize, gap: f64 },
    #[error("time {t_us} outside series range [{first}, {last}]")]
    OutOfRange { t_us: i64, first: i64, last: i64 },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid series: {0}")]
    Series(String),
}
