use serde::{Deserialize, Serialize};

use super::CharacterizationError;

/// Scalar signal sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalSeries {
    samples: Vec<(i64, f64)>,
}

impl SignalSeries {
    pub fn new(samples: Vec<(i64, f64)>) -> Result<Self, CharacterizationError> {
        if let Some(w) = samples.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(CharacterizationError::Series(format!(
                "timestamps must increase strictly ({} then {})",
                w[0].0, w[1].0
            )));
        }
        if samples.iter().any(|(_, v)| !v.is_finite()) {
            return Err(CharacterizationError::Series("non-finite value".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(i64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Parses `timestamp_us,value` CSV with a header row.
    pub fn parse_csv(text: &str) -> Result<Self, CharacterizationError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim().replace(' ', "") == "timestamp_us,value" => {}
            _ => {
                return Err(CharacterizationError::Parse {
                    line: 1,
                    msg: "expected header `timestamp_us,value`".into(),
                })
            }
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let bad = |m: &str| CharacterizationError::Parse {
                line: i + 1,
                msg: m.to_string(),
            };
            let (t, v) = line.split_once(',').ok_or_else(|| bad("expected two fields"))?;
            let t: i64 = t.trim().parse().map_err(|_| bad("bad timestamp"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("bad value"))?;
            samples.push((t, v));
        }
        Self::new(samples)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("timestamp_us,value\n");
        for (t, v) in &self.samples {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }

    pub fn value_at(&self, t_us: i64) -> Result<f64, CharacterizationError> {
        let (first, last) = match (self.samples.first(), self.samples.last()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => return Err(CharacterizationError::Series("empty series".into())),
        };
        if t_us < first || t_us > last {
            return Err(CharacterizationError::OutOfRange { t_us, first, last });
        }
        let i = self.samples.partition_point(|(t, _)| *t < t_us);
        let (t1, v1) = self.samples[i];
        if t1 == t_us {
            return Ok(v1);
        }
        let (t0, v0) = self.samples[i - 1];
        Ok(v0 + (v1 - v0) * (t_us - t0) as f64 / (t1 - t0) as f64)
    }
}

/// Uniform grid from `t0_us` to `t1_us` inclusive at `grid_hz`.
pub fn grid(t0_us: i64, t1_us: i64, grid_hz: f64) -> Vec<i64> {
    let step = 1e6 / grid_hz;
    let n = ((t1_us - t0_us) as f64 / step + 1e-9).floor() as i64 + 1;
    (0..n.max(0)).map(|k| t0_us + (k as f64 * step).round() as i64).collect()
}

pub fn resample(series: &SignalSeries, times: &[i64]) -> Result<Vec<f64>, CharacterizationError> {
    times.iter().map(|t| series.value_at(*t)).collect()
}

/// Pearson correlation of two series after linear resampling onto a common
/// uniform grid over `[t0_us, t1_us]`.
pub fn pearson(
    x: &SignalSeries,
    y: &SignalSeries,
    t0_us: i64,
    t1_us: i64,
    grid_hz: f64,
) -> Result<f64, CharacterizationError> {
    if !(grid_hz > 0.0) || t1_us < t0_us {
        return Err(CharacterizationError::Domain("need grid_hz > 0 and t0 <= t1".into()));
    }
    let times = grid(t0_us, t1_us, grid_hz);
    if times.len() < 3 {
        return Err(CharacterizationError::InsufficientData {
            needed: 3,
            got: times.len(),
        });
    }
    let xs = resample(x, &times)?;
    let ys = resample(y, &times)?;
    correlation(&xs, &ys)
}

/// Sample correlation of two equal-length slices.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64, CharacterizationError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // relative floor: a constant series leaves only rounding residue
    let flat = |ss: f64, m: f64| ss <= 1e-24 * n * (1.0 + m * m);
    if flat(sxx, mx) || flat(syy, my) {
        return Err(CharacterizationError::UndefinedCorrelation(
            "zero variance after resampling".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(f: impl Fn(f64) -> f64, n: i64) -> SignalSeries {
        SignalSeries::new((0..n).map(|k| (k * 100_000, f(k as f64 * 0.1))).collect()).unwrap()
    }

    #[test]
    fn affine_relation_is_perfect() {
        let x = series(|t| (t * 1.3).sin() + 0.2 * t, 200);
        let y = series(|t| 2.0 * ((t * 1.3).sin() + 0.2 * t) + 1.0, 200);
        let r = pearson(&x, &y, 0, 19_900_000, 2.0).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let neg = series(|t| -((t * 1.3).sin() + 0.2 * t), 200);
        assert!((pearson(&x, &neg, 0, 19_900_000, 2.0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_is_weakly_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..1000).map(|_| n.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..1000).map(|_| n.sample(&mut rng)).collect();
        let xs = SignalSeries::new(x.iter().enumerate().map(|(k, v)| (k as i64 * 500_000, *v)).collect()).unwrap();
        let ys = SignalSeries::new(y.iter().enumerate().map(|(k, v)| (k as i64 * 500_000, *v)).collect()).unwrap();
        let r = pearson(&xs, &ys, 0, 999 * 500_000, 2.0).unwrap();
        assert!(r.abs() < 0.1, "{r}");
    }

    #[test]
    fn constant_series_is_undefined() {
        let x = series(|t| t, 50);
        let c = series(|_| 0.7, 50);
        assert!(matches!(
            pearson(&x, &c, 0, 4_900_000, 2.0),
            Err(CharacterizationError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn window_must_be_covered() {
        let x = series(|t| t, 50);
        assert!(matches!(
            pearson(&x, &x, 0, 9_000_000, 2.0),
            Err(CharacterizationError::OutOfRange { .. })
        ));
        assert!(matches!(
            pearson(&x, &x, 0, 500_000, 2.0),
            Err(CharacterizationError::InsufficientData { .. })
        ));
    }

    #[test]
    fn strictly_increasing_times() {
        assert!(SignalSeries::new(vec![(1, 0.0), (1, 1.0)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = series(|t| t * t, 5);
        assert_eq!(SignalSeries::parse_csv(&s.to_csv()).unwrap(), s);
    }

    #[test]
    fn grid_is_inclusive() {
        assert_eq!(grid(0, 2_000_000, 2.0), vec![0, 500_000, 1_000_000, 1_500_000, 2_000_000]);
    }
}
