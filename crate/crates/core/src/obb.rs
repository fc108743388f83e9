//! Oriented-box representations.
//!
//! The canonical representation is [`OrientedBoxLE`], the long-edge
//! convention: `h` is the long edge, lying along `u = (cos θ, sin θ)`, `w` is
//! the short edge along `v = (−sin θ, cos θ)`, and `θ ∈ [−π/2, π/2)`.
//! [`OrientedBoxOC`] is the OpenCV convention, where `θ ∈ [−π/2, 0)` and the
//! reference edge may be either the long or the short one.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which `w` and `h` count as equal.
pub const SQUARE_TIE_TOL: f64 = 1e-9;
/// Relative tolerance for recognising a quadrilateral as a rectangle.
pub const RECTANGLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl std::ops::Sub for Point {
    type Output = Point;

    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;

    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2-D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Validates and wraps a vertex list. Clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if !vertices.iter().all(|p| p.is_finite()) {
            return Err(Error::Geometry("non-finite polygon vertex".into()));
        }
        let area = signed_area(&vertices);
        let scale = bbox_diagonal(&vertices);
        if area.abs() <= 1e-12 * scale * scale {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            if turn < -1e-9 * scale * scale {
                return Err(Error::Geometry("polygon is not convex".into()));
            }
        }
        Ok(Self { vertices })
    }

    /// Wraps vertices already known to be CCW and convex.
    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point> {
        self.vertices
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
}

pub(crate) fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * acc
}

fn bbox_diagonal(pts: &[Point]) -> f64 {
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (x1 - x0).hypot(y1 - y0)
}

/// Wraps an angle into `[−π/2, π/2)`, the long-edge range.
pub fn normalize_angle_le(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("angle must be finite, got {theta}")));
    }
    Ok(wrap_le(theta))
}

#[inline]
pub(crate) fn wrap_le(theta: f64) -> f64 {
    if (-FRAC_PI_2..FRAC_PI_2).contains(&theta) {
        return theta;
    }
    let mut r = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    // rem_euclid can round up to exactly the modulus
    if r >= FRAC_PI_2 {
        r -= PI;
    }
    r
}

/// Rotated box in the long-edge convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBoxLE {
    pub cx: f64,
    pub cy: f64,
    /// Short-edge length.
    pub w: f64,
    /// Long-edge length.
    pub h: f64,
    /// Angle of the long edge against the x-axis, in `[−π/2, π/2)`.
    pub theta: f64,
}

impl OrientedBoxLE {
    /// Builds a canonical box from arbitrary positive dimensions.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        canonicalize_le(cx, cy, w, h, theta)
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    /// Unit vector along the long edge.
    pub fn long_axis(&self) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(c, s)
    }

    /// Unit vector along the short edge.
    pub fn short_axis(&self) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(-s, c)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn corners(&self) -> [Point; 4] {
        rect_corners(self.center(), self.h, self.w, self.theta)
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        le_to_corners(self)
    }

    pub fn aspect_ratio(&self) -> f64 {
        aspect_ratio(self)
    }

    /// Radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.w.hypot(self.h)
    }
}

/// CCW corners of a rectangle with edge `along` on direction `theta`.
fn rect_corners(c: Point, along: f64, across: f64, theta: f64) -> [Point; 4] {
    let (s, co) = theta.sin_cos();
    let u = Point::new(co, s).scale(along / 2.0);
    let v = Point::new(-s, co).scale(across / 2.0);
    [((c + u) + v), ((c - u) + v), ((c - u) - v), ((c + u) - v)]
}

/// Puts `(cx, cy, w, h, θ)` into canonical long-edge form: `h ≥ w` and
/// `θ ∈ [−π/2, π/2)`. Near-square boxes keep their angle.
pub fn canonicalize_le(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<OrientedBoxLE> {
    if !(cx.is_finite() && cy.is_finite()) {
        return Err(Error::Domain("box center must be finite".into()));
    }
    if !(w.is_finite() && h.is_finite()) || w <= 0.0 || h <= 0.0 {
        return Err(Error::Domain(format!(
            "box dimensions must be positive, got w={w}, h={h}"
        )));
    }
    let theta = normalize_angle_le(theta)?;
    let tie = (w - h).abs() <= SQUARE_TIE_TOL * w.max(h);
    if w > h && !tie {
        Ok(OrientedBoxLE {
            cx,
            cy,
            w: h,
            h: w,
            theta: wrap_le(theta + FRAC_PI_2),
        })
    } else {
        Ok(OrientedBoxLE {
            cx,
            cy,
            w,
            h,
            theta,
        })
    }
}

/// The four corners `c ± (h/2)·u ± (w/2)·v`, counter-clockwise.
pub fn le_to_corners(b: &OrientedBoxLE) -> ConvexPolygon {
    ConvexPolygon::from_ccw_unchecked(b.corners().to_vec())
}

/// Recovers a canonical box from four corner points.
///
/// Exact rectangles (to [`RECTANGLE_TOL`]) are inverted directly; any other
/// quadrilateral is replaced by its minimum-area enclosing rectangle.
pub fn corners_to_le(quad: &[Point; 4]) -> Result<OrientedBoxLE> {
    if !quad.iter().all(|p| p.is_finite()) {
        return Err(Error::Geometry("non-finite corner".into()));
    }
    let hull = convex_hull(quad);
    let scale = bbox_diagonal(quad);
    if hull.len() < 3 || signed_area(&hull) <= 1e-12 * scale * scale {
        return Err(Error::Geometry("corner points are collinear".into()));
    }

    let [p0, p1, p2, p3] = *quad;
    let tol = RECTANGLE_TOL * scale;
    let mid_gap = ((p0 + p2) - (p1 + p3)).norm();
    let diag_gap = (p0.dist(p2) - p1.dist(p3)).abs();
    if mid_gap <= tol && diag_gap <= tol {
        let e1 = ((p1 - p0) + (p2 - p3)).scale(0.5);
        let e2 = ((p3 - p0) + (p2 - p1)).scale(0.5);
        let c = (((p0 + p1) + p2) + p3).scale(0.25);
        return canonicalize_le(c.x, c.y, e2.norm(), e1.norm(), e1.y.atan2(e1.x));
    }
    min_area_rect(&hull)
}

/// Minimum-area enclosing rectangle of a point set (rotating calipers over
/// the convex hull), in canonical long-edge form.
pub fn min_area_rect(points: &[Point]) -> Result<OrientedBoxLE> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(Error::Geometry("point set is degenerate".into()));
    }
    let n = hull.len();
    let mut best: Option<(f64, Point, f64, f64, f64)> = None;
    for i in 0..n {
        let edge = hull[(i + 1) % n] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let d = edge.scale(1.0 / len);
        let nrm = Point::new(-d.y, d.x);
        let (mut s0, mut s1, mut t0, mut t1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in &hull {
            let s = p.dot(d);
            let t = p.dot(nrm);
            s0 = s0.min(s);
            s1 = s1.max(s);
            t0 = t0.min(t);
            t1 = t1.max(t);
        }
        let area = (s1 - s0) * (t1 - t0);
        if best.is_none_or(|b| area < b.0) {
            let c = d.scale(0.5 * (s0 + s1)) + nrm.scale(0.5 * (t0 + t1));
            best = Some((area, c, s1 - s0, t1 - t0, d.y.atan2(d.x)));
        }
    }
    let (_, c, along, across, theta) =
        best.ok_or_else(|| Error::Geometry("point set is degenerate".into()))?;
    canonicalize_le(c.x, c.y, across, along, theta)
}

/// Andrew's monotone chain; returns CCW hull without collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - a) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Rotated box in the OpenCV convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBoxOC {
    pub cx: f64,
    pub cy: f64,
    pub w_oc: f64,
    /// Length of the reference edge, the one at angle `theta_oc`.
    pub h_oc: f64,
    /// In `[−π/2, 0)`.
    pub theta_oc: f64,
}

impl OrientedBoxOC {
    pub fn new(cx: f64, cy: f64, w_oc: f64, h_oc: f64, theta_oc: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && theta_oc.is_finite()) {
            return Err(Error::Domain("OpenCV box fields must be finite".into()));
        }
        if !(w_oc > 0.0 && h_oc > 0.0) || !(w_oc.is_finite() && h_oc.is_finite()) {
            return Err(Error::Domain(format!(
                "box dimensions must be positive, got w={w_oc}, h={h_oc}"
            )));
        }
        if !(-FRAC_PI_2..0.0).contains(&theta_oc) {
            return Err(Error::Domain(format!(
                "OpenCV angle must lie in [-pi/2, 0), got {theta_oc}"
            )));
        }
        Ok(Self {
            cx,
            cy,
            w_oc,
            h_oc,
            theta_oc,
        })
    }

    pub fn corners(&self) -> [Point; 4] {
        rect_corners(
            Point::new(self.cx, self.cy),
            self.h_oc,
            self.w_oc,
            self.theta_oc,
        )
    }
}

pub fn le_to_oc(b: &OrientedBoxLE) -> OrientedBoxOC {
    if b.theta < 0.0 {
        OrientedBoxOC {
            cx: b.cx,
            cy: b.cy,
            w_oc: b.w,
            h_oc: b.h,
            theta_oc: b.theta,
        }
    } else {
        // the short edge becomes the reference edge
        OrientedBoxOC {
            cx: b.cx,
            cy: b.cy,
            w_oc: b.h,
            h_oc: b.w,
            theta_oc: b.theta - FRAC_PI_2,
        }
    }
}

pub fn oc_to_le(b: &OrientedBoxOC) -> OrientedBoxLE {
    canonicalize_le(b.cx, b.cy, b.w_oc, b.h_oc, b.theta_oc)
        .expect("OrientedBoxOC invariants guarantee a valid box")
}

/// FCOS-style regression target: a sample point and its distances to the
/// four sides of a rotated box.
///
/// `l`/`r` are measured along the long-edge direction `u` (`l` towards `−u`),
/// `t`/`b` along `v` (`t` towards `−v`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionVector {
    pub px: f64,
    pub py: f64,
    pub t: f64,
    pub b: f64,
    pub l: f64,
    pub r: f64,
    pub theta: f64,
}

pub fn regression_to_box(rv: &RegressionVector) -> Result<OrientedBoxLE> {
    let fields = [rv.px, rv.py, rv.t, rv.b, rv.l, rv.r, rv.theta];
    if !fields.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("regression vector must be finite".into()));
    }
    if rv.t < 0.0 || rv.b < 0.0 || rv.l < 0.0 || rv.r < 0.0 {
        return Err(Error::Domain("side distances must be non-negative".into()));
    }
    let along = rv.l + rv.r;
    let across = rv.t + rv.b;
    if along <= 0.0 || across <= 0.0 {
        return Err(Error::Geometry("regression vector has zero extent".into()));
    }
    let (s, c) = rv.theta.sin_cos();
    let u = Point::new(c, s);
    let v = Point::new(-s, c);
    let center =
        Point::new(rv.px, rv.py) + u.scale(0.5 * (rv.r - rv.l)) + v.scale(0.5 * (rv.b - rv.t));
    canonicalize_le(center.x, center.y, across, along, rv.theta)
}

/// Distances from an interior point to the four sides of `b`.
pub fn box_to_regression(b: &OrientedBoxLE, px: f64, py: f64) -> Result<RegressionVector> {
    if !(px.is_finite() && py.is_finite()) {
        return Err(Error::Domain("sample point must be finite".into()));
    }
    let d = Point::new(px, py) - b.center();
    let along = d.dot(b.long_axis());
    let across = d.dot(b.short_axis());
    let rv = RegressionVector {
        px,
        py,
        t: 0.5 * b.w + across,
        b: 0.5 * b.w - across,
        l: 0.5 * b.h + along,
        r: 0.5 * b.h - along,
        theta: b.theta,
    };
    let margin = 1e-12 * b.h;
    if rv.t.min(rv.b).min(rv.l).min(rv.r) <= margin {
        return Err(Error::Domain(format!(
            "point ({px}, {py}) is not strictly inside the box"
        )));
    }
    Ok(rv)
}

/// Long over short edge; at least 1 for canonical boxes.
pub fn aspect_ratio(b: &OrientedBoxLE) -> f64 {
    b.h / b.w
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Largest distance from a corner of `a` to the nearest corner of `b`.
    pub(crate) fn corner_set_gap(a: &[Point; 4], b: &[Point; 4]) -> f64 {
        let one_way = |x: &[Point; 4], y: &[Point; 4]| {
            x.iter()
                .map(|p| y.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        one_way(a, b).max(one_way(b, a))
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle_le(FRAC_PI_2).unwrap(), -FRAC_PI_2);
        let r = normalize_angle_le(-3.0 * PI / 4.0).unwrap();
        assert!(close(r, PI / 4.0, 1e-12));
        let k = (r - (-3.0 * PI / 4.0)) / PI;
        assert!(close(k, k.round(), 1e-12));
        assert_eq!(normalize_angle_le(0.3).unwrap(), 0.3);
        assert_eq!(normalize_angle_le(-FRAC_PI_2).unwrap(), -FRAC_PI_2);
        assert!(normalize_angle_le(f64::NAN).is_err());
        assert!(normalize_angle_le(f64::INFINITY).is_err());
    }

    #[test]
    fn canonicalize_examples() {
        let b = canonicalize_le(0.0, 0.0, 2.0, 4.0, 0.2).unwrap();
        assert_eq!((b.w, b.h, b.theta), (2.0, 4.0, 0.2));

        let swapped = canonicalize_le(0.0, 0.0, 4.0, 2.0, 0.2).unwrap();
        assert_eq!((swapped.w, swapped.h), (2.0, 4.0));
        assert!(close(swapped.theta, 0.2 - FRAC_PI_2, 1e-12));
        assert!(close(swapped.theta, -1.3708, 1e-4));
        // corners unchanged by the swap
        let orig = rect_corners(Point::default(), 2.0, 4.0, 0.2);
        assert!(corner_set_gap(&orig, &swapped.corners()) < 1e-12);

        let sq = canonicalize_le(0.0, 0.0, 3.0, 3.0, 0.4).unwrap();
        assert_eq!((sq.w, sq.h, sq.theta), (3.0, 3.0, 0.4));

        assert!(canonicalize_le(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(canonicalize_le(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn corners_examples() {
        let b = OrientedBoxLE::new(0.0, 0.0, 2.0, 4.0, 0.0).unwrap();
        let want = [
            Point::new(2.0, 1.0),
            Point::new(-2.0, 1.0),
            Point::new(-2.0, -1.0),
            Point::new(2.0, -1.0),
        ];
        assert!(corner_set_gap(&b.corners(), &want) < 1e-12);
        assert!(signed_area(b.to_polygon().vertices()) > 0.0);

        let b = OrientedBoxLE::new(0.0, 0.0, 2.0, 4.0, -FRAC_PI_2).unwrap();
        let want = [
            Point::new(1.0, 2.0),
            Point::new(-1.0, 2.0),
            Point::new(-1.0, -2.0),
            Point::new(1.0, -2.0),
        ];
        assert!(corner_set_gap(&b.corners(), &want) < 1e-12);
    }

    #[test]
    fn corners_to_le_exact_rectangle() {
        let b = OrientedBoxLE::new(5.0, 5.0, 2.0, 4.0, 0.3).unwrap();
        let back = corners_to_le(&b.corners()).unwrap();
        assert!(close(back.cx, 5.0, 1e-12) && close(back.cy, 5.0, 1e-12));
        assert!(close(back.w, 2.0, 1e-12) && close(back.h, 4.0, 1e-12));
        assert!(close(back.theta, 0.3, 1e-12));
    }

    #[test]
    fn corners_to_le_rejects_collinear() {
        let quad = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(3.0, 3.0),
        ];
        assert!(matches!(corners_to_le(&quad), Err(Error::Geometry(_))));
        let quad = [Point::new(1.0, 1.0); 4];
        assert!(corners_to_le(&quad).is_err());
    }

    fn enclosing_area(points: &[Point], a: f64) -> f64 {
        let (s, c) = f64::sin_cos(a);
        let (mut s0, mut s1, mut t0, mut t1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in points {
            let u = p.x * c + p.y * s;
            let v = -p.x * s + p.y * c;
            s0 = s0.min(u);
            s1 = s1.max(u);
            t0 = t0.min(v);
            t1 = t1.max(v);
        }
        (s1 - s0) * (t1 - t0)
    }

    /// Brute-force minimum-area rectangle over an angle grid.
    /// Returns `(best area, best angle)`.
    fn sweep_min_area(points: &[Point], from: f64, to: f64, step: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, from);
        let mut a = from;
        while a < to {
            let area = enclosing_area(points, a);
            if area < best.0 {
                best = (area, a);
            }
            a += step;
        }
        best
    }

    #[test]
    fn corners_to_le_perturbed_quad_matches_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let b = OrientedBoxLE::new(
                rng.gen_range(0.0..100.0),
                rng.gen_range(0.0..100.0),
                rng.gen_range(1.0..10.0),
                rng.gen_range(10.0..30.0),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            )
            .unwrap();
            let mut quad = b.corners();
            for p in quad.iter_mut() {
                p.x += rng.gen_range(-0.01..0.01);
                p.y += rng.gen_range(-0.01..0.01);
            }
            let fit = corners_to_le(&quad).unwrap();
            let (oracle, at) = sweep_min_area(&quad, 0.0, FRAC_PI_2, 0.001);
            assert!(
                fit.area() <= oracle * (1.0 + 1e-4),
                "{} vs {}",
                fit.area(),
                oracle
            );
            // the coarse grid only bounds from above; refine around its best angle
            let (fine, _) = sweep_min_area(&quad, at - 0.002, at + 0.002, 1e-7);
            assert!(
                fit.area() >= fine * (1.0 - 1e-6),
                "{} vs {}",
                fit.area(),
                fine
            );
            assert!(fit.area() <= fine * (1.0 + 1e-6));
            // the fitted rectangle encloses every corner
            for p in &quad {
                let d = *p - fit.center();
                assert!(d.dot(fit.long_axis()).abs() <= fit.h / 2.0 + 1e-9);
                assert!(d.dot(fit.short_axis()).abs() <= fit.w / 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn le_oc_examples() {
        let b = OrientedBoxLE::new(0.0, 0.0, 2.0, 4.0, -0.3).unwrap();
        let oc = le_to_oc(&b);
        assert_eq!((oc.w_oc, oc.h_oc, oc.theta_oc), (2.0, 4.0, -0.3));

        let b = OrientedBoxLE::new(0.0, 0.0, 2.0, 4.0, 0.3).unwrap();
        let oc = le_to_oc(&b);
        assert_eq!((oc.w_oc, oc.h_oc), (4.0, 2.0));
        assert!(close(oc.theta_oc, -1.2708, 1e-4));
        assert!(corner_set_gap(&b.corners(), &oc.corners()) < 1e-12);

        let back = oc_to_le(&OrientedBoxOC::new(0.0, 0.0, 2.0, 4.0, -0.3).unwrap());
        assert_eq!((back.w, back.h, back.theta), (2.0, 4.0, -0.3));

        let back = oc_to_le(&OrientedBoxOC::new(0.0, 0.0, 4.0, 2.0, 0.3 - FRAC_PI_2).unwrap());
        assert_eq!((back.w, back.h), (2.0, 4.0));
        assert!(close(back.theta, 0.3, 1e-12));

        let sq = oc_to_le(&OrientedBoxOC::new(0.0, 0.0, 3.0, 3.0, -0.7).unwrap());
        assert_eq!(sq.theta, -0.7);

        assert!(OrientedBoxOC::new(0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(OrientedBoxOC::new(0.0, 0.0, 1.0, 1.0, -FRAC_PI_2).is_ok());
    }

    #[test]
    fn le_to_oc_at_zero_angle() {
        let b = OrientedBoxLE::new(1.0, 2.0, 2.0, 5.0, 0.0).unwrap();
        let oc = le_to_oc(&b);
        assert_eq!(oc.theta_oc, -FRAC_PI_2);
        assert!(corner_set_gap(&b.corners(), &oc.corners()) < 1e-12);
    }

    #[test]
    fn regression_examples() {
        let rv = RegressionVector {
            px: 10.0,
            py: 10.0,
            t: 5.0,
            b: 5.0,
            l: 5.0,
            r: 5.0,
            theta: 0.0,
        };
        let b = regression_to_box(&rv).unwrap();
        assert_eq!((b.cx, b.cy, b.w, b.h), (10.0, 10.0, 10.0, 10.0));

        let rv = RegressionVector {
            px: 0.0,
            py: 0.0,
            t: 2.0,
            b: 2.0,
            l: 1.0,
            r: 1.0,
            theta: 0.0,
        };
        let b = regression_to_box(&rv).unwrap();
        assert_eq!((b.w, b.h), (2.0, 4.0));
        assert!(close(b.theta, -FRAC_PI_2, 1e-12));
        assert!(close(b.cx, 0.0, 1e-12) && close(b.cy, 0.0, 1e-12));

        let zero = RegressionVector {
            l: 0.0,
            r: 0.0,
            ..rv
        };
        assert!(matches!(regression_to_box(&zero), Err(Error::Geometry(_))));
        let neg = RegressionVector { t: -1.0, ..rv };
        assert!(regression_to_box(&neg).is_err());
    }

    #[test]
    fn box_to_regression_examples() {
        let b = OrientedBoxLE::new(3.0, -1.0, 2.0, 6.0, 0.7).unwrap();
        let rv = box_to_regression(&b, 3.0, -1.0).unwrap();
        assert!(close(rv.l, 3.0, 1e-12) && close(rv.r, 3.0, 1e-12));
        assert!(close(rv.t, 1.0, 1e-12) && close(rv.b, 1.0, 1e-12));

        let b = OrientedBoxLE::new(0.0, 0.0, 2.0, 4.0, 0.0).unwrap();
        let rv = box_to_regression(&b, 1.0, 0.0).unwrap();
        assert!(close(rv.l, 3.0, 1e-12) && close(rv.r, 1.0, 1e-12));
        assert!(close(rv.t, 1.0, 1e-12) && close(rv.b, 1.0, 1e-12));

        assert!(matches!(
            box_to_regression(&b, 2.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(box_to_regression(&b, 5.0, 0.0).is_err());
    }

    #[test]
    fn aspect_ratio_examples() {
        let b = OrientedBoxLE::new(0.0, 0.0, 2.0, 4.0, 0.1).unwrap();
        assert_eq!(aspect_ratio(&b), 2.0);
        let sq = OrientedBoxLE::new(0.0, 0.0, 3.0, 3.0, 0.1).unwrap();
        assert_eq!(sq.aspect_ratio(), 1.0);
        let swapped = canonicalize_le(0.0, 0.0, 4.0, 2.0, 0.1).unwrap();
        assert_eq!(aspect_ratio(&swapped), 2.0);
    }

    #[test]
    fn convex_polygon_validation() {
        assert!(ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        let cw = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ];
        let p = ConvexPolygon::new(cw).unwrap();
        assert!(signed_area(p.vertices()) > 0.0);
        let dart = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(0.0, 2.0),
            Point::new(1.0, 1.0),
        ];
        assert!(ConvexPolygon::new(dart).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_box() -> impl Strategy<Value = OrientedBoxLE> {
            (
                0.0..1000.0f64,
                0.0..1000.0f64,
                1.0..500.0f64,
                1.0..500.0f64,
                -10.0..10.0f64,
            )
                .prop_map(|(x, y, w, h, t)| OrientedBoxLE::new(x, y, w, h, t).unwrap())
        }

        proptest! {
            #[test]
            fn normalize_is_periodic_and_idempotent(t in -1e3..1e3f64, k in -50i32..50) {
                let a = normalize_angle_le(t).unwrap();
                prop_assert!((-FRAC_PI_2..FRAC_PI_2).contains(&a));
                let b = normalize_angle_le(t + k as f64 * PI).unwrap();
                let gap = (a - b).rem_euclid(PI);
                prop_assert!(gap.min(PI - gap) < 1e-12);
                let again = normalize_angle_le(a).unwrap();
                let gap = (a - again).rem_euclid(PI);
                prop_assert!(gap.min(PI - gap) < 1e-12);
            }

            #[test]
            fn constructors_are_canonical(
                w in 0.1..100.0f64, h in 0.1..100.0f64, t in -7.0..7.0f64
            ) {
                let b = OrientedBoxLE::new(0.0, 0.0, w, h, t).unwrap();
                prop_assert!(b.h >= b.w * (1.0 - SQUARE_TIE_TOL));
                prop_assert!((-FRAC_PI_2..FRAC_PI_2).contains(&b.theta));
                let raw = rect_corners(Point::default(), h, w, t);
                prop_assert!(corner_set_gap(&raw, &b.corners()) < 1e-9);
            }

            #[test]
            fn corners_roundtrip(b in any_box()) {
                let back = corners_to_le(&b.corners()).unwrap();
                prop_assert!(corner_set_gap(&b.corners(), &back.corners()) < 1e-9);
            }

            #[test]
            fn oc_roundtrip(b in any_box()) {
                let oc = le_to_oc(&b);
                prop_assert!((-FRAC_PI_2..0.0).contains(&oc.theta_oc));
                prop_assert!(corner_set_gap(&b.corners(), &oc.corners()) < 1e-9);
                let back = oc_to_le(&oc);
                prop_assert!(corner_set_gap(&b.corners(), &back.corners()) < 1e-9);
            }

            #[test]
            fn regression_roundtrip(b in any_box(), fu in -0.49..0.49f64, fv in -0.49..0.49f64) {
                let p = b.center()
                    + b.long_axis().scale(fu * b.h)
                    + b.short_axis().scale(fv * b.w);
                let rv = box_to_regression(&b, p.x, p.y).unwrap();
                prop_assert!(rv.t > 0.0 && rv.b > 0.0 && rv.l > 0.0 && rv.r > 0.0);
                let back = regression_to_box(&rv).unwrap();
                prop_assert!(corner_set_gap(&b.corners(), &back.corners()) < 1e-9);
            }
        }
    }
}
