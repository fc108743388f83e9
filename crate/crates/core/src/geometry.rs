//! Exact rotated-box overlap and rotated non-maximum suppression.

use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::obb::{ConvexPolygon, OrientedBoxLE, Point};

/// Vertices within this distance of a clip edge count as inside.
pub const CLIP_EDGE_TOL: f64 = 1e-9;
/// Output vertices closer than this are merged.
pub const VERTEX_MERGE_TOL: f64 = 1e-9;

/// Shoelace area of a vertex ring.
pub fn polygon_area(vertices: &[Point]) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(Error::Geometry(format!(
            "area needs at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    Ok(crate::obb::signed_area(vertices).abs())
}

/// Sutherland–Hodgman clip of `subject` against the convex `clip` polygon.
/// Returns `None` when the intersection has no area.
pub fn clip_convex(subject: &ConvexPolygon, clip: &ConvexPolygon) -> Option<ConvexPolygon> {
    let mut out: Vec<Point> = subject.vertices().to_vec();
    let edges = clip.vertices();
    let n = edges.len();
    let mut input: Vec<Point> = Vec::with_capacity(out.len() + n);
    for i in 0..n {
        if out.len() < 3 {
            return None;
        }
        let a = edges[i];
        let b = edges[(i + 1) % n];
        let dir = b - a;
        let len = dir.norm();
        if len == 0.0 {
            continue;
        }
        // signed distance to the edge line, positive on the inner (left) side
        let side = |p: Point| dir.cross(p - a) / len;

        std::mem::swap(&mut out, &mut input);
        out.clear();
        let m = input.len();
        for j in 0..m {
            let s = input[j];
            let e = input[(j + 1) % m];
            let ds = side(s);
            let de = side(e);
            let s_in = ds >= -CLIP_EDGE_TOL;
            let e_in = de >= -CLIP_EDGE_TOL;
            match (s_in, e_in) {
                (true, true) => out.push(e),
                (true, false) => out.push(lerp(s, e, ds, de)),
                (false, true) => {
                    out.push(lerp(s, e, ds, de));
                    out.push(e);
                }
                (false, false) => {}
            }
        }
    }
    let merged = merge_close(out);
    if merged.len() < 3 {
        return None;
    }
    Some(ConvexPolygon::from_ccw_unchecked(merged))
}

fn lerp(s: Point, e: Point, ds: f64, de: f64) -> Point {
    let denom = ds - de;
    if denom.abs() < f64::MIN_POSITIVE {
        return s;
    }
    let t = ds / denom;
    s + (e - s).scale(t)
}

fn merge_close(pts: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q| q.dist(p) > VERTEX_MERGE_TOL) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(out[out.len() - 1]) <= VERTEX_MERGE_TOL {
        out.pop();
    }
    out
}

/// Intersection area of two rotated boxes.
pub fn intersection_area(a: &OrientedBoxLE, b: &OrientedBoxLE) -> f64 {
    let reach = a.circumradius() + b.circumradius();
    if a.center().dist(b.center()) >= reach {
        return 0.0;
    }
    clip_convex(&a.to_polygon(), &b.to_polygon()).map_or(0.0, |p| p.area())
}

/// Rotated IoU, `area(a ∩ b) / area(a ∪ b)`, computed by polygon clipping.
///
/// Arguments are put in a fixed order before clipping, so the result is
/// bitwise symmetric.
pub fn skew_iou(a: &OrientedBoxLE, b: &OrientedBoxLE) -> f64 {
    let (first, second) = if box_key(a) <= box_key(b) {
        (a, b)
    } else {
        (b, a)
    };
    let inter = intersection_area(first, second);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = first.area() + second.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn box_key(b: &OrientedBoxLE) -> [u64; 5] {
    // total order on the bit patterns is enough for a canonical argument order
    [b.cx, b.cy, b.w, b.h, b.theta].map(|v| v.to_bits())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmsMode {
    /// Only detections of the same class suppress each other.
    #[default]
    ClassAware,
    ClassAgnostic,
}

/// Greedy rotated NMS.
///
/// Detections are visited by descending score (ties keep input order); one
/// is kept when its IoU with every kept detection of the same class (or any
/// class in [`NmsMode::ClassAgnostic`]) is below `iou_thresh`. Returns the
/// kept indices in visiting order.
pub fn rotated_nms(dets: &[Detection], iou_thresh: f64, mode: NmsMode) -> Result<Vec<usize>> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::Config(format!(
            "NMS IoU threshold must lie in (0, 1], got {iou_thresh}"
        )));
    }
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::Domain(format!("non-finite score {}", d.score)));
    }
    let order = crate::eval::rank_by_score(dets.iter().map(|d| d.score));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let d = &dets[i];
        let suppressed = kept.iter().any(|&k| {
            let other = &dets[k];
            (mode == NmsMode::ClassAgnostic || other.class_id == d.class_id)
                && skew_iou(&other.bbox, &d.bbox) >= iou_thresh
        });
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn unit_square(cx: f64, cy: f64, theta: f64) -> OrientedBoxLE {
        OrientedBoxLE::new(cx, cy, 1.0, 1.0, theta).unwrap()
    }

    fn det(cx: f64, score: f64, class_id: usize) -> Detection {
        Detection {
            bbox: OrientedBoxLE::new(cx, 0.0, 1.0, 2.0, 0.0).unwrap(),
            class_id,
            score,
            image_id: "img".into(),
        }
    }

    #[test]
    fn area_examples() {
        let sq = unit_square(0.5, 0.5, 0.0);
        assert!((polygon_area(sq.to_polygon().vertices()).unwrap() - 1.0).abs() < 1e-15);
        let tri = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 2.0),
        ];
        assert_eq!(polygon_area(&tri).unwrap(), 2.0);
        assert!(polygon_area(&tri[..2]).is_err());
    }

    #[test]
    fn clip_examples() {
        let a = unit_square(0.0, 0.0, 0.0).to_polygon();
        let self_clip = clip_convex(&a, &a).unwrap();
        assert!((self_clip.area() - 1.0).abs() < 1e-12);

        let b = unit_square(0.5, 0.0, 0.0).to_polygon();
        assert!((clip_convex(&a, &b).unwrap().area() - 0.5).abs() < 1e-12);

        let r = unit_square(0.0, 0.0, FRAC_PI_4).to_polygon();
        let oct = clip_convex(&a, &r).unwrap();
        assert_eq!(oct.len(), 8);
        let want = 2.0 * (SQRT_2 - 1.0);
        assert!((oct.area() - want).abs() < 1e-12);
        assert!((polygon_area(oct.vertices()).unwrap() - 0.82843).abs() < 1e-5);
        assert!(crate::obb::signed_area(oct.vertices()) > 0.0);

        let far = unit_square(5.0, 0.0, 0.3).to_polygon();
        assert!(clip_convex(&a, &far).is_none());
        // touching along an edge has no area
        let touch = unit_square(1.0, 0.0, 0.0).to_polygon();
        assert!(clip_convex(&a, &touch).map_or(0.0, |p| p.area()) < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = OrientedBoxLE::new(3.0, 4.0, 2.0, 5.0, 0.4).unwrap();
        assert!((skew_iou(&a, &a) - 1.0).abs() < 1e-12);
        let b = OrientedBoxLE::new(103.0, 4.0, 2.0, 2.0, 0.4).unwrap();
        assert_eq!(skew_iou(&a, &b), 0.0);
        let s = unit_square(0.0, 0.0, 0.0);
        let r = unit_square(0.0, 0.0, FRAC_PI_4);
        let want = SQRT_2 / 2.0;
        assert!((skew_iou(&s, &r) - want).abs() < 1e-9);
        assert!((skew_iou(&s, &r) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    }

    #[test]
    fn iou_is_bitwise_symmetric() {
        let a = OrientedBoxLE::new(0.3, 0.1, 2.0, 5.0, 0.4).unwrap();
        let b = OrientedBoxLE::new(1.0, -0.5, 1.5, 4.0, -1.1).unwrap();
        assert_eq!(skew_iou(&a, &b).to_bits(), skew_iou(&b, &a).to_bits());
    }

    #[test]
    fn perpendicular_long_boxes() {
        let a = OrientedBoxLE::new(0.0, 0.0, 1.0, 4.0, 0.0).unwrap();
        let b = OrientedBoxLE::new(0.0, 0.0, 1.0, 4.0, -FRAC_PI_2).unwrap();
        // cross: overlap 1, union 7
        assert!((skew_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn nms_examples() {
        assert_eq!(
            rotated_nms(&[det(0.0, 0.5, 0)], 0.5, NmsMode::ClassAware).unwrap(),
            vec![0]
        );
        let dup = [det(0.0, 0.8, 0), det(0.0, 0.9, 0)];
        assert_eq!(
            rotated_nms(&dup, 0.5, NmsMode::ClassAware).unwrap(),
            vec![1]
        );
        let apart = [det(0.0, 0.8, 0), det(50.0, 0.9, 0)];
        assert_eq!(
            rotated_nms(&apart, 0.5, NmsMode::ClassAware).unwrap(),
            vec![1, 0]
        );
        let classes = [det(0.0, 0.8, 0), det(0.0, 0.9, 1)];
        assert_eq!(
            rotated_nms(&classes, 0.5, NmsMode::ClassAware).unwrap(),
            vec![1, 0]
        );
        assert_eq!(
            rotated_nms(&classes, 0.5, NmsMode::ClassAgnostic).unwrap(),
            vec![1]
        );
        let tie = [det(0.0, 0.7, 0), det(0.0, 0.7, 0)];
        assert_eq!(
            rotated_nms(&tie, 0.5, NmsMode::ClassAware).unwrap(),
            vec![0]
        );
        assert!(rotated_nms(&tie, 0.0, NmsMode::ClassAware).is_err());
        let nan = [det(0.0, f64::NAN, 0)];
        assert!(rotated_nms(&nan, 0.5, NmsMode::ClassAware).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_box() -> impl Strategy<Value = OrientedBoxLE> {
            (
                -5.0..5.0f64,
                -5.0..5.0f64,
                0.5..6.0f64,
                0.5..6.0f64,
                -3.2..3.2f64,
            )
                .prop_map(|(x, y, w, h, t)| OrientedBoxLE::new(x, y, w, h, t).unwrap())
        }

        fn moved(b: &OrientedBoxLE, dx: f64, dy: f64, rot: f64) -> OrientedBoxLE {
            let (s, c) = rot.sin_cos();
            let x = c * b.cx - s * b.cy + dx;
            let y = s * b.cx + c * b.cy + dy;
            OrientedBoxLE::new(x, y, b.w, b.h, b.theta + rot).unwrap()
        }

        proptest! {
            #[test]
            fn iou_bounds_and_symmetry(a in any_box(), b in any_box()) {
                let v = skew_iou(&a, &b);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v.to_bits(), skew_iou(&b, &a).to_bits());
                prop_assert!((skew_iou(&a, &a) - 1.0).abs() < 1e-12);
            }

            #[test]
            fn iou_rigid_invariance(
                a in any_box(), b in any_box(),
                dx in -100.0..100.0f64, dy in -100.0..100.0f64, rot in -3.2..3.2f64
            ) {
                let before = skew_iou(&a, &b);
                let after = skew_iou(&moved(&a, dx, dy, rot), &moved(&b, dx, dy, rot));
                prop_assert!((before - after).abs() < 1e-9, "{} vs {}", before, after);
            }

            #[test]
            fn nms_survivors_do_not_overlap(
                boxes in proptest::collection::vec((any_box(), 0.0..1.0f64, 0usize..3), 0..30),
                thresh in 0.05..1.0f64
            ) {
                let dets: Vec<Detection> = boxes.into_iter().map(|(b, s, c)| Detection {
                    bbox: b, class_id: c, score: s, image_id: "x".into()
                }).collect();
                let kept = rotated_nms(&dets, thresh, NmsMode::ClassAware).unwrap();
                for (i, &a) in kept.iter().enumerate() {
                    for &b in &kept[i + 1..] {
                        prop_assert!(dets[a].score >= dets[b].score);
                        if dets[a].class_id == dets[b].class_id {
                            prop_assert!(skew_iou(&dets[a].bbox, &dets[b].bbox) < thresh);
                        }
                    }
                }
            }
        }
    }
}
