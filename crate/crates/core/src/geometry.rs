//! Planar oriented-box geometry shared by detection and tracking.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box: width {w}, length {l}")]
    Degenerate { w: f64, l: f64 },
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    // rem_euclid can return TAU itself for tiny negative inputs
    if a <= -PI {
        a += TAU;
    }
    a
}

/// Rectangle on the ground plane. `l` runs along the heading, `w` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub l: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, w: f64, l: f64, yaw: f64) -> Self {
        Self {
            cx,
            cy,
            w,
            l,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.l
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.l > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.w.is_finite()
            && self.l.is_finite()
            && self.yaw.is_finite()
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.l;
        let hw = 0.5 * self.w;
        let local = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
        local.map(|[u, v]| [self.cx + c * u - s * v, self.cy + s * u + c * v])
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.l && v.abs() <= 0.5 * self.w
    }

    /// Same box after rotating the whole plane by `angle` about the origin.
    pub fn rotated_about_origin(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            c * self.cx - s * self.cy,
            s * self.cx + c * self.cy,
            self.w,
            self.l,
            self.yaw + angle,
        )
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Radius of the circumscribed circle.
    pub fn radius(&self) -> f64 {
        0.5 * self.w.hypot(self.l)
    }
}

/// Shoelace area of a simple polygon; positive for counter-clockwise order.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// Sutherland-Hodgman clip of `subject` against a convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let s_cur = side(cur);
            let s_prev = side(prev);
            if s_cur >= 0.0 {
                if s_prev < 0.0 {
                    output.push(intersect(prev, cur, s_prev, s_cur));
                }
                output.push(cur);
            } else if s_prev >= 0.0 {
                output.push(intersect(prev, cur, s_prev, s_cur));
            }
        }
    }
    output
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let dx = a.cx - b.cx;
    let dy = a.cy - b.cy;
    let reach = a.radius() + b.radius();
    if dx * dx + dy * dy > reach * reach {
        return 0.0;
    }
    polygon_area(&clip_convex(&a.corners(), &b.corners())).max(0.0)
}

/// Intersection over union of two oriented rectangles.
pub fn iou_oriented(a: &OrientedBox, b: &OrientedBox) -> Result<f64, GeometryError> {
    for bx in [a, b] {
        if !bx.is_valid() {
            return Err(GeometryError::Degenerate { w: bx.w, l: bx.l });
        }
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalize_wraps_into_half_open_interval() {
        assert_abs_diff_eq!(normalize_angle(PI), PI);
        assert_abs_diff_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI / 4.0 + PI), -PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(5.0 * TAU + 0.25), 0.25, epsilon = 1e-9);
    }

    #[test]
    fn identical_boxes_have_unit_iou() {
        let a = OrientedBox::new(3.0, -1.0, 1.8, 4.5, 0.7);
        assert_abs_diff_eq!(iou_oriented(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_boxes_have_zero_iou() {
        let a = OrientedBox::new(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = OrientedBox::new(10.0, 0.0, 2.0, 2.0, 0.3);
        assert_eq!(iou_oriented(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn half_shifted_squares_give_one_third() {
        let a = OrientedBox::new(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = OrientedBox::new(1.0, 0.0, 2.0, 2.0, 0.0);
        assert_abs_diff_eq!(intersection_area(&a, &b), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iou_oriented(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_square_inside_larger_square() {
        // 45 degree unit-diagonal diamond fully inside a 4x4 square
        let big = OrientedBox::new(0.0, 0.0, 4.0, 4.0, 0.0);
        let small = OrientedBox::new(0.0, 0.0, 1.0, 1.0, PI / 4.0);
        assert_abs_diff_eq!(iou_oriented(&big, &small).unwrap(), 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let a = OrientedBox::new(0.0, 0.0, 0.0, 2.0, 0.0);
        let b = OrientedBox::new(0.0, 0.0, 1.0, 2.0, 0.0);
        assert!(matches!(iou_oriented(&a, &b), Err(GeometryError::Degenerate { .. })));
    }

    #[test]
    fn corners_are_counter_clockwise() {
        let b = OrientedBox::new(1.0, 2.0, 1.5, 4.0, -2.0);
        assert_abs_diff_eq!(polygon_area(&b.corners()), 6.0, epsilon = 1e-12);
        assert!(b.contains(1.0, 2.0));
    }
}
