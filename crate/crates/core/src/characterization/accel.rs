use super::CharacterizationError;

/// Second-order Butterworth low-pass coefficients (b, a) for the given
/// cutoff and sample rate, via the bilinear transform.
fn butterworth2(cutoff_hz: f64, fs_hz: f64) -> ([f64; 3], [f64; 2]) {
    let k = (std::f64::consts::PI * cutoff_hz / fs_hz).tan();
    let q = std::f64::consts::FRAC_1_SQRT_2;
    let norm = 1.0 / (1.0 + k / q + k * k);
    let b0 = k * k * norm;
    ([b0, 2.0 * b0, b0], [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm])
}

fn run_filter(x: &[f64], b: [f64; 3], a: [f64; 2]) -> Vec<f64> {
    // start in steady state at the first sample to avoid a step transient
    let mut out = Vec::with_capacity(x.len());
    let (mut x1, mut x2) = (x[0], x[0]);
    let (mut y1, mut y2) = (x[0], x[0]);
    for &xi in x {
        let y = b[0] * xi + b[1] * x1 + b[2] * x2 - a[0] * y1 - a[1] * y2;
        x2 = x1;
        x1 = xi;
        y2 = y1;
        y1 = y;
        out.push(y);
    }
    out
}

/// Forward-backward filtering with odd reflection padding at both ends.
fn filtfilt(x: &[f64], b: [f64; 3], a: [f64; 2]) -> Vec<f64> {
    let n = x.len();
    let pad = (3 * 3).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let mut y = run_filter(&ext, b, a);
    y.reverse();
    let mut y = run_filter(&y, b, a);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Acceleration from a speed log: central differences (one-sided at the
/// ends), then a zero-phase second-order low-pass at `cutoff_hz`. The filter
/// runs at the mean sample rate; no filtering is applied when the cutoff is
/// at or above Nyquist.
pub fn derive_accel(
    times_us: &[i64],
    speeds: &[f64],
    cutoff_hz: f64,
) -> Result<Vec<f64>, CharacterizationError> {
    let n = times_us.len();
    if n != speeds.len() {
        return Err(CharacterizationError::Series("times and speeds differ in length".into()));
    }
    if n < 3 {
        return Err(CharacterizationError::InsufficientData { needed: 3, got: n });
    }
    if times_us.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CharacterizationError::Series("timestamps must increase strictly".into()));
    }
    if !(cutoff_hz > 0.0) {
        return Err(CharacterizationError::Domain("cutoff must be positive".into()));
    }
    let t: Vec<f64> = times_us.iter().map(|t| *t as f64 * 1e-6).collect();
    let mut raw = Vec::with_capacity(n);
    raw.push((speeds[1] - speeds[0]) / (t[1] - t[0]));
    for i in 1..n - 1 {
        raw.push((speeds[i + 1] - speeds[i - 1]) / (t[i + 1] - t[i - 1]));
    }
    raw.push((speeds[n - 1] - speeds[n - 2]) / (t[n - 1] - t[n - 2]));

    let fs = (n - 1) as f64 / (t[n - 1] - t[0]);
    if cutoff_hz >= 0.5 * fs {
        return Ok(raw);
    }
    let (b, a) = butterworth2(cutoff_hz, fs);
    Ok(filtfilt(&raw, b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(n: usize, hz: f64) -> Vec<i64> {
        (0..n).map(|k| (k as f64 * 1e6 / hz).round() as i64).collect()
    }

    #[test]
    fn linear_speed_gives_constant_accel() {
        let t = times(200, 10.0);
        let v: Vec<f64> = t.iter().map(|t| 5.0 + 0.8 * *t as f64 * 1e-6).collect();
        for a in derive_accel(&t, &v, 1.0).unwrap() {
            assert!((a - 0.8).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn slow_sinusoid_passes_fast_one_is_attenuated() {
        let t = times(2000, 10.0);
        let slow: Vec<f64> = t.iter().map(|t| (0.2 * *t as f64 * 1e-6).sin()).collect();
        let a = derive_accel(&t, &slow, 1.0).unwrap();
        for (i, ai) in a.iter().enumerate().skip(100).take(1800) {
            let expect = 0.2 * (0.2 * t[i] as f64 * 1e-6).cos();
            assert!((ai - expect).abs() < 2e-3, "{ai} vs {expect}");
        }
        let fast: Vec<f64> = t
            .iter()
            .map(|t| 0.05 * (2.0 * std::f64::consts::PI * 3.0 * *t as f64 * 1e-6).sin())
            .collect();
        let a = derive_accel(&t, &fast, 1.0).unwrap();
        let peak = a[100..1900].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // unfiltered derivative amplitude is about 0.05 * 2pi * 3 * 0.86
        assert!(peak < 0.1, "{peak}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(derive_accel(&[0, 1], &[0.0, 1.0], 1.0).is_err());
        assert!(derive_accel(&[0, 2, 1], &[0.0, 1.0, 2.0], 1.0).is_err());
        assert!(derive_accel(&[0, 1, 2], &[0.0, 1.0], 1.0).is_err());
    }
}
