//! Rotated 2D boxes, yaw-oriented 3D boxes and the convex-polygon machinery
//! needed to compare them.
//!
//! Angles are in degrees, counterclockwise from +x, and are stored normalized
//! to `[0, 180)`: a rectangle is unchanged by a half turn.

use nalgebra::{Point2, Point3, Vector2};

use crate::error::{Error, Result};

/// Relative slack applied to containment tests so that boundary points (and
/// the corners produced by [`RotatedBox2D::corners`]) are counted as inside.
const BOUNDARY_EPS: f64 = 1e-9;

/// Normalizes an angle in degrees to `[0, 180)`.
pub fn normalize_angle(deg: f64) -> f64 {
    let r = deg.rem_euclid(180.0);
    // rem_euclid rounds tiny negative inputs up to exactly 180.
    if r >= 180.0 {
        0.0
    } else {
        r
    }
}

#[inline]
fn within(local: f64, half: f64) -> bool {
    local.abs() <= half + BOUNDARY_EPS * half.max(1.0)
}

/// Image-plane rotated rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatedBox2D {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

impl RotatedBox2D {
    /// `theta` is in degrees; it is normalized to `[0, 180)`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        Self {
            cx,
            cy,
            w,
            h,
            theta: normalize_angle(theta),
        }
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }

    /// Size along the box's local x-axis.
    pub fn w(&self) -> f64 {
        self.w
    }

    /// Size along the box's local y-axis.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Rotation in degrees, in `[0, 180)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn area(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.w * self.h
        }
    }

    /// True when the box has no area or carries non-finite parameters.
    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
            || ![self.cx, self.cy, self.w, self.h, self.theta]
                .iter()
                .all(|v| v.is_finite())
    }

    /// Corners in counterclockwise order, starting from local `(-w/2, -h/2)`.
    pub fn corners(&self) -> ConvexPolygon2D {
        let (s, c) = self.theta.to_radians().sin_cos();
        let (hw, hh) = (0.5 * self.w, 0.5 * self.h);
        let vertices = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
            .iter()
            .map(|&(x, y)| Point2::new(self.cx + c * x - s * y, self.cy + s * x + c * y))
            .collect();
        ConvexPolygon2D { vertices }
    }

    /// Expresses `p` in the box's local frame.
    pub fn to_local(&self, p: Point2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.to_radians().sin_cos();
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        Vector2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: Point2<f64>) -> bool {
        let local = self.to_local(p);
        within(local.x, 0.5 * self.w) && within(local.y, 0.5 * self.h)
    }

    /// Scales width and height, keeping center and angle.
    pub fn expand(&self, factor_w: f64, factor_h: f64) -> Result<Self> {
        check_factors(factor_w, factor_h)?;
        Ok(Self {
            w: self.w * factor_w,
            h: self.h * factor_h,
            ..*self
        })
    }
}

/// Box rotated about the vertical axis only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox3D {
    center: Point3<f64>,
    extent_x: f64,
    extent_y: f64,
    extent_z: f64,
    yaw: f64,
}

impl OrientedBox3D {
    /// Extents are full sizes along the local axes; `yaw` is in degrees.
    pub fn new(center: Point3<f64>, extent_x: f64, extent_y: f64, extent_z: f64, yaw: f64) -> Self {
        Self {
            center,
            extent_x,
            extent_y,
            extent_z,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn center(&self) -> Point3<f64> {
        self.center
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }

    pub fn extent_z(&self) -> f64 {
        self.extent_z
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn volume(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.extent_x * self.extent_y * self.extent_z
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.extent_x > 0.0 && self.extent_y > 0.0 && self.extent_z > 0.0)
    }

    /// Unit local x and y axes in the world horizontal plane.
    pub fn planar_axes(&self) -> (Vector2<f64>, Vector2<f64>) {
        let (s, c) = self.yaw.to_radians().sin_cos();
        (Vector2::new(c, s), Vector2::new(-s, c))
    }

    /// Horizontal footprint as a 2D rotated box.
    pub fn footprint(&self) -> RotatedBox2D {
        RotatedBox2D::new(
            self.center.x,
            self.center.y,
            self.extent_x,
            self.extent_y,
            self.yaw,
        )
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let (s, c) = self.yaw.to_radians().sin_cos();
        let d = p - self.center;
        let lx = c * d.x + s * d.y;
        let ly = -s * d.x + c * d.y;
        within(d.z, 0.5 * self.extent_z)
            && within(lx, 0.5 * self.extent_x)
            && within(ly, 0.5 * self.extent_y)
    }

    /// Scales the planar extents; `extent_z` is left untouched.
    pub fn expand(&self, factor_w: f64, factor_h: f64) -> Result<Self> {
        check_factors(factor_w, factor_h)?;
        Ok(Self {
            extent_x: self.extent_x * factor_w,
            extent_y: self.extent_y * factor_h,
            ..*self
        })
    }
}

fn check_factors(factor_w: f64, factor_h: f64) -> Result<()> {
    if factor_w > 0.0 && factor_h > 0.0 && factor_w.is_finite() && factor_h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "expansion factors must be positive, got ({factor_w}, {factor_h})"
        )))
    }
}

/// Free-function form of [`RotatedBox2D::contains`].
pub fn contains2d(b: &RotatedBox2D, p: Point2<f64>) -> bool {
    b.contains(p)
}

/// Free-function form of [`OrientedBox3D::contains`].
pub fn contains3d(b: &OrientedBox3D, p: &Point3<f64>) -> bool {
    b.contains(p)
}

/// Convex polygon with counterclockwise vertices.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ConvexPolygon2D {
    vertices: Vec<Point2<f64>>,
}

impl ConvexPolygon2D {
    /// Builds a polygon from convex vertices in either winding. Clockwise input
    /// is reversed and repeated consecutive vertices are dropped.
    pub fn new(vertices: Vec<Point2<f64>>) -> Self {
        let mut poly = Self {
            vertices: dedup_ring(vertices),
        };
        if signed_area(&poly.vertices) < 0.0 {
            poly.vertices.reverse();
        }
        poly
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn centroid_of_vertices(&self) -> Option<Point2<f64>> {
        if self.vertices.is_empty() {
            return None;
        }
        let sum = self
            .vertices
            .iter()
            .fold(Vector2::zeros(), |acc, v| acc + v.coords);
        Some(Point2::from(sum / self.vertices.len() as f64))
    }
}

fn signed_area(v: &[Point2<f64>]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

fn dedup_ring(mut v: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    v.dedup_by(|a, b| a == b);
    while v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    v
}

#[inline]
fn cross(o: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Area of the intersection of two convex polygons.
///
/// Clips `a` against each edge of `b` (Sutherland-Hodgman). Returns 0 for
/// disjoint or degenerate inputs.
pub fn intersection_area(a: &ConvexPolygon2D, b: &ConvexPolygon2D) -> f64 {
    if a.len() < 3 || b.len() < 3 || a.area() == 0.0 || b.area() == 0.0 {
        return 0.0;
    }
    let clip = &b.vertices;
    let mut subject = a.vertices.clone();
    for i in 0..clip.len() {
        if subject.len() < 3 {
            return 0.0;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let mut out = Vec::with_capacity(subject.len() + 2);
        for j in 0..subject.len() {
            let cur = subject[j];
            let prev = subject[(j + subject.len() - 1) % subject.len()];
            let dc = cross(e0, e1, cur);
            let dp = cross(e0, e1, prev);
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(edge_crossing(prev, cur, dp, dc));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(edge_crossing(prev, cur, dp, dc));
            }
        }
        subject = dedup_ring(out);
    }
    signed_area(&subject).max(0.0)
}

fn edge_crossing(p: Point2<f64>, q: Point2<f64>, dp: f64, dq: f64) -> Point2<f64> {
    let t = dp / (dp - dq);
    p + (q - p) * t
}

/// Plain rotated-box IoU.
pub fn iou(a: &RotatedBox2D, b: &RotatedBox2D) -> f64 {
    if a.is_degenerate() || b.is_degenerate() {
        return 0.0;
    }
    let inter = intersection_area(&a.corners(), &b.corners());
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Angle-related IoU: plain IoU scaled by `|cos(theta_a - theta_b)|`.
pub fn ariou(a: &RotatedBox2D, b: &RotatedBox2D) -> f64 {
    let overlap = iou(a, b);
    if overlap == 0.0 {
        return 0.0;
    }
    overlap * angle_factor(a.theta, b.theta)
}

/// `|cos(a - b)|` for angles in degrees.
pub fn angle_factor(a_deg: f64, b_deg: f64) -> f64 {
    (a_deg - b_deg).to_radians().cos().abs()
}
