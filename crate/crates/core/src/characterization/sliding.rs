use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_idm, CharacterizationError, FitConfig, FitFlag, FollowSample, IdmParams, ParamBounds};

pub const PARAM_SERIES_HEADER: &str = "t_center_us,s0,v0,T,a,b,sse,flags";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub t_start_us: i64,
    pub t_end_us: i64,
    pub t_center_us: i64,
    pub params: IdmParams,
    pub sse: f64,
    pub n: usize,
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub t_start_us: i64,
    pub t_end_us: i64,
    pub n: usize,
    pub reason: String,
}

/// One row of the parameter-series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub t_center_us: i64,
    pub params: IdmParams,
    pub sse: f64,
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSeries {
    /// Fitted windows in time order.
    pub windows: Vec<WindowEstimate>,
    pub skipped: Vec<SkippedWindow>,
}

impl ParamSeries {
    pub fn rows(&self) -> Vec<ParamRow> {
        self.windows
            .iter()
            .map(|w| ParamRow {
                t_center_us: w.t_center_us,
                params: w.params,
                sse: w.sse,
                flags: w.flags.clone(),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows())
    }
}

pub fn rows_to_csv(rows: &[ParamRow]) -> String {
    let mut out = String::from(PARAM_SERIES_HEADER);
    out.push('\n');
    for r in rows {
        let p = r.params;
        let flags: Vec<String> = r.flags.iter().map(|f| f.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t_center_us,
            p.s0,
            p.v0,
            p.time_headway,
            p.a,
            p.b,
            r.sse,
            flags.join(";")
        ));
    }
    out
}

pub fn parse_param_series(text: &str) -> Result<Vec<ParamRow>, CharacterizationError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == PARAM_SERIES_HEADER => {}
        _ => {
            return Err(CharacterizationError::Parse {
                line: 1,
                msg: format!("expected header `{PARAM_SERIES_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |m: String| CharacterizationError::Parse { line: i + 1, msg: m };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let t_center_us: i64 = fields[0].parse().map_err(|_| bad("bad t_center_us".into()))?;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = fields[k + 1]
                .parse()
                .map_err(|_| bad(format!("bad number in column {}", k + 2)))?;
        }
        let flags = fields[7]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<FitFlag>().map_err(bad))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ParamRow {
            t_center_us,
            params: IdmParams::new(v[0], v[1], v[2], v[3], v[4]),
            sse: v[5],
            flags,
        });
    }
    Ok(rows)
}

/// Number of windows over a span: one if the span is shorter than the
/// window, otherwise `floor((span - window) / stride) + 1`.
pub fn expected_window_count(span_us: i64, window_us: i64, stride_us: i64) -> usize {
    assert!(window_us > 0 && stride_us > 0);
    if span_us < window_us {
        1
    } else {
        ((span_us - window_us) / stride_us) as usize + 1
    }
}

fn to_us(s: f64) -> i64 {
    (s * 1e6).round() as i64
}

/// Fits each window `[start, start + window]` (both ends inclusive) with
/// starts at `first + k * stride`. Windows run independently in parallel;
/// the output is in time order.
pub fn sliding_estimation(
    samples: &[FollowSample],
    window_s: f64,
    stride_s: f64,
    bounds: &ParamBounds,
    cfg: &FitConfig,
) -> Result<ParamSeries, CharacterizationError> {
    if !(window_s > 0.0 && stride_s > 0.0) {
        return Err(CharacterizationError::Domain("window and stride must be positive".into()));
    }
    bounds.validate()?;
    if samples.windows(2).any(|w| w[1].timestamp_us <= w[0].timestamp_us) {
        return Err(CharacterizationError::Series("samples must be in strictly increasing time".into()));
    }
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f.timestamp_us, l.timestamp_us),
        _ => return Ok(ParamSeries::default()),
    };
    let (window_us, stride_us) = (to_us(window_s), to_us(stride_s));
    if window_us <= 0 || stride_us <= 0 {
        return Err(CharacterizationError::Domain("window and stride must be at least 1 us".into()));
    }
    let count = expected_window_count(last - first, window_us, stride_us);

    let results: Vec<Result<WindowEstimate, SkippedWindow>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let t_start_us = first + k as i64 * stride_us;
            let t_end_us = t_start_us + window_us;
            let lo = samples.partition_point(|s| s.timestamp_us < t_start_us);
            let hi = samples.partition_point(|s| s.timestamp_us <= t_end_us);
            let window = &samples[lo..hi];
            match fit_idm(window, bounds, cfg) {
                Ok(fit) => Ok(WindowEstimate {
                    t_start_us,
                    t_end_us,
                    t_center_us: t_start_us + window_us / 2,
                    params: fit.params,
                    sse: fit.sse,
                    n: window.len(),
                    flags: fit.flags,
                }),
                Err(e) => Err(SkippedWindow {
                    t_start_us,
                    t_end_us,
                    n: window.len(),
                    reason: e.to_string(),
                }),
            }
        })
        .collect();

    let mut series = ParamSeries::default();
    for r in results {
        match r {
            Ok(w) => series.windows.push(w),
            Err(s) => series.skipped.push(s),
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characterization::{simulate_follower, FollowerInit, PiecewiseAccel};
    use proptest::prelude::*;

    fn samples(n: usize, hz: f64) -> Vec<FollowSample> {
        let p = IdmParams::new(2.0, 30.0, 1.5, 1.0, 2.0);
        let leader = PiecewiseAccel::speed_steps(12.0, &[20.0, 8.0, 16.0], 4.0, 1.5);
        let init = FollowerInit { v: 14.0, s: 25.0, t0_us: 1_591_475_830_000_000 };
        simulate_follower(&p, &leader, init, 1.0 / hz, n).unwrap()
    }

    #[test]
    fn forty_second_span_gives_seven_windows() {
        let s = samples(401, 10.0);
        assert_eq!(s.last().unwrap().timestamp_us - s[0].timestamp_us, 40_000_000);
        let fast = FitConfig { starts: 2, max_restarts: 1, ..FitConfig::default() };
        let out = sliding_estimation(&s, 10.0, 5.0, &ParamBounds::default(), &fast).unwrap();
        assert_eq!(out.windows.len(), 7);
        assert!(out.skipped.is_empty());
        assert!(out.windows.windows(2).all(|w| w[0].t_center_us < w[1].t_center_us));
        assert_eq!(out.windows[0].n, 101);
        assert_eq!(out.windows[0].t_center_us, s[0].timestamp_us + 5_000_000);
    }

    #[test]
    fn stride_longer_than_span_gives_one_window() {
        let s = samples(50, 10.0);
        let out = sliding_estimation(&s, 10.0, 100.0, &ParamBounds::default(), &FitConfig::default()).unwrap();
        assert_eq!(out.windows.len() + out.skipped.len(), 1);
    }

    #[test]
    fn sparse_windows_are_skipped() {
        let s = samples(401, 10.0);
        let sparse: Vec<FollowSample> = s.iter().step_by(20).copied().collect();
        let out = sliding_estimation(&sparse, 10.0, 5.0, &ParamBounds::default(), &FitConfig::default()).unwrap();
        assert_eq!(out.skipped.len(), 7);
        assert!(out.windows.is_empty());
        assert!(out.skipped[0].reason.contains("insufficient"));
    }

    #[test]
    fn csv_round_trip() {
        let series = ParamSeries {
            windows: vec![WindowEstimate {
                t_start_us: 0,
                t_end_us: 10,
                t_center_us: 5,
                params: IdmParams::new(2.0, 30.0, 1.5, 1.0, 2.0),
                sse: 0.25,
                n: 30,
                flags: vec![FitFlag::NoImprovement, FitFlag::NonIdentifiable],
            }],
            skipped: vec![],
        };
        let text = series.to_csv();
        assert!(text.starts_with(PARAM_SERIES_HEADER));
        assert_eq!(parse_param_series(&text).unwrap(), series.rows());
        assert!(parse_param_series("t,x\n").is_err());
    }

    proptest! {
        #[test]
        fn count_matches_closed_form(n in 2usize..600, window in 1i64..30, stride in 1i64..30) {
            // uniform 10 Hz timestamps; only the window arithmetic is exercised here
            let span = (n as i64 - 1) * 100_000;
            let window_us = window * 1_000_000;
            let stride_us = stride * 500_000;
            let count = expected_window_count(span, window_us, stride_us);
            if span < window_us {
                prop_assert_eq!(count, 1);
            } else {
                let k = count as i64;
                prop_assert!((k - 1) * stride_us + window_us <= span);
                prop_assert!(k * stride_us + window_us > span);
            }
        }
    }
}
