//! Constant-velocity Kalman filter over planar position.
//!
//! State is `(x, y, vx, vy)`; only position is measured. Process noise is the
//! continuous white-noise-acceleration model, so propagating twice by `dt/2`
//! equals propagating once by `dt`.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl KalmanState {
    /// Fresh state at a measured position with unknown velocity.
    pub fn init(x: f64, y: f64, meas_sigma: f64, vel_var: f64) -> Self {
        let pv = meas_sigma * meas_sigma;
        Self {
            mean: Vector4::new(x, y, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(pv, pv, vel_var, vel_var)),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[2], self.mean[3])
    }

    pub fn predict(&self, dt: f64, accel_sigma: f64) -> Self {
        let f = transition(dt);
        let cov = f * self.cov * f.transpose() + process_noise(dt, accel_sigma);
        Self {
            mean: f * self.mean,
            cov: symmetrize(cov),
        }
    }

    /// Measurement update with a position fix.
    pub fn correct(&self, x: f64, y: f64, meas_sigma: f64) -> Self {
        let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let r = Matrix2::identity() * (meas_sigma * meas_sigma);
        let innovation = Vector2::new(x, y) - h * self.mean;
        let s = h * self.cov * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return *self;
        };
        let gain = self.cov * h.transpose() * s_inv;
        let i_kh = Matrix4::identity() - gain * h;
        // Joseph form keeps the covariance symmetric positive semi-definite
        let cov = i_kh * self.cov * i_kh.transpose() + gain * r * gain.transpose();
        Self {
            mean: self.mean + gain * innovation,
            cov: symmetrize(cov),
        }
    }
}

pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

pub fn process_noise(dt: f64, accel_sigma: f64) -> Matrix4<f64> {
    let q = accel_sigma * accel_sigma;
    let (a, b, c) = (q * dt.powi(3) / 3.0, q * dt.powi(2) / 2.0, q * dt);
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    )
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
