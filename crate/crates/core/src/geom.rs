//! Planar geometry primitives. Metres, radians, east = +x, north = +y,
//! headings counter-clockwise from east.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Rotated +90° (to the left).
    pub fn left(self) -> Self {
        Self::new(-self.y, self.x)
    }

    /// Rotated -90° (to the right).
    pub fn right(self) -> Self {
        Self::new(self.y, -self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Normalises an angle to `[0, 2π)`.
pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Normalises an angle difference to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Point, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_heading(heading),
        }
    }

    pub fn direction(&self) -> Point {
        Point::from_heading(self.heading)
    }

    /// Bearing of `p` relative to this pose, in `(-π, π]`, left positive.
    pub fn bearing_to(&self, p: Point) -> f64 {
        wrap_angle((p - self.position).angle() - self.heading)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    /// True when the interiors overlap (touching edges do not count).
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    pub fn distance_to_point(&self, p: Point) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn distance_to_rect(&self, o: &Rect) -> f64 {
        let dx = (o.min.x - self.max.x).max(self.min.x - o.max.x).max(0.0);
        let dy = (o.min.y - self.max.y).max(self.min.y - o.max.y).max(0.0);
        dx.hypot(dy)
    }
}

/// Rectangle of `length` along `heading` and `width` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub centre: Point,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(centre: Point, heading: f64, length: f64, width: f64) -> Self {
        Self {
            centre,
            heading: normalize_heading(heading),
            length,
            width,
        }
    }

    pub fn axes(&self) -> (Point, Point) {
        let u = Point::from_heading(self.heading);
        (u, u.left())
    }

    /// Corners in counter-clockwise order starting at rear-right.
    pub fn corners(&self) -> [Point; 4] {
        let (u, v) = self.axes();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let c = self.centre;
        [
            c - u * hl - v * hw,
            c + u * hl - v * hw,
            c + u * hl + v * hw,
            c - u * hl + v * hw,
        ]
    }

    /// Coordinates of `p` in the rectangle frame.
    pub fn local(&self, p: Point) -> Point {
        let (u, v) = self.axes();
        let d = p - self.centre;
        Point::new(d.dot(u), d.dot(v))
    }

    pub fn contains(&self, p: Point) -> bool {
        let l = self.local(p);
        l.x.abs() <= self.length / 2.0 + 1e-12 && l.y.abs() <= self.width / 2.0 + 1e-12
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ..*self
        }
    }

    pub fn bounding_rect(&self) -> Rect {
        let cs = self.corners();
        let mut min = cs[0];
        let mut max = cs[0];
        for c in &cs[1..] {
            min.x = min.x.min(c.x);
            min.y = min.y.min(c.y);
            max.x = max.x.max(c.x);
            max.y = max.y.max(c.y);
        }
        Rect::new(min, max)
    }

    /// Separating-axis test; touching rectangles do not intersect.
    pub fn intersects(&self, o: &OrientedRect) -> bool {
        let a = self.corners();
        let b = o.corners();
        let (au, av) = self.axes();
        let (bu, bv) = o.axes();
        for axis in [au, av, bu, bv] {
            let (amin, amax) = project(&a, axis);
            let (bmin, bmax) = project(&b, axis);
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
        true
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance_to_point(&self, p: Point) -> f64 {
        let l = self.local(p);
        let dx = (l.x.abs() - self.length / 2.0).max(0.0);
        let dy = (l.y.abs() - self.width / 2.0).max(0.0);
        dx.hypot(dy)
    }

    /// Entry distance of the ray `origin + t·dir` (unit `dir`), if it hits.
    pub fn ray_hit(&self, origin: Point, dir: Point) -> Option<f64> {
        self.frame().ray_hit(origin, dir)
    }

    /// The rectangle with its axes evaluated, for repeated queries.
    pub fn frame(&self) -> RectFrame {
        let (u, v) = self.axes();
        RectFrame {
            centre: self.centre,
            u,
            v,
            hl: self.length / 2.0,
            hw: self.width / 2.0,
        }
    }
}

/// An [`OrientedRect`] with precomputed axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectFrame {
    centre: Point,
    u: Point,
    v: Point,
    hl: f64,
    hw: f64,
}

impl RectFrame {
    /// See [`OrientedRect::ray_hit`].
    pub fn ray_hit(&self, origin: Point, dir: Point) -> Option<f64> {
        let (u, v) = (self.u, self.v);
        let o = origin - self.centre;
        let (ox, oy) = (o.dot(u), o.dot(v));
        let (dx, dy) = (dir.dot(u), dir.dot(v));
        let (hl, hw) = (self.hl, self.hw);
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for (os, ds, h) in [(ox, dx, hl), (oy, dy, hw)] {
            if ds.abs() < 1e-15 {
                if os.abs() > h {
                    return None;
                }
            } else {
                let mut ta = (-h - os) / ds;
                let mut tb = (h - os) / ds;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

fn project(pts: &[Point; 4], axis: Point) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pts {
        let d = p.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Intersection distance of the ray `origin + t·dir` with segment `a`–`b`.
/// Parallel (including collinear) segments never hit.
pub fn ray_segment(origin: Point, dir: Point, a: Point, b: Point) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-12 {
        return None;
    }
    let w = a - origin;
    let t = w.cross(e) / denom;
    let s = w.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&s) {
        Some(t)
    } else {
        None
    }
}

/// Proper or touching intersection of two closed segments.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    fn orient(a: Point, b: Point, c: Point) -> f64 {
        (b - a).cross(c - a)
    }
    fn on_seg(a: Point, b: Point, p: Point) -> bool {
        p.x >= a.x.min(b.x) - 1e-12
            && p.x <= a.x.max(b.x) + 1e-12
            && p.y >= a.y.min(b.y) - 1e-12
            && p.y <= a.y.max(b.y) + 1e-12
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_seg(q1, q2, p1))
        || (d2 == 0.0 && on_seg(q1, q2, p2))
        || (d3 == 0.0 && on_seg(p1, p2, q1))
        || (d4 == 0.0 && on_seg(p1, p2, q2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn heading_normalisation() {
        assert!(close(normalize_heading(-PI / 2.0), 1.5 * PI));
        assert!(close(normalize_heading(TAU + 0.5), 0.5));
        assert!(normalize_heading(-1e-18) < TAU);
        assert!(close(wrap_angle(1.5 * PI), -PI / 2.0));
    }

    #[test]
    fn oriented_rect_contains_and_distance() {
        let r = OrientedRect::new(Point::new(10.0, 0.0), 0.0, 4.0, 2.0);
        assert!(r.contains(Point::new(11.9, 0.9)));
        assert!(!r.contains(Point::new(12.1, 0.0)));
        assert!(close(r.distance_to_point(Point::new(15.0, 0.0)), 3.0));
        assert!(close(
            r.distance_to_point(Point::new(15.0, 5.0)),
            3.0_f64.hypot(4.0)
        ));
    }

    #[test]
    fn sat_overlap_and_touching() {
        let a = OrientedRect::new(Point::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let b = OrientedRect::new(Point::new(3.9, 0.0), 0.0, 4.0, 2.0);
        let c = OrientedRect::new(Point::new(4.0, 0.0), 0.0, 4.0, 2.0);
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        let rotated = OrientedRect::new(Point::new(2.5, 2.5), PI / 4.0, 4.0, 2.0);
        assert!(a.intersects(&rotated));
    }

    #[test]
    fn ray_hits_rect_front_face() {
        let r = OrientedRect::new(Point::new(10.0, 0.0), 0.0, 4.0, 2.0);
        let t = r
            .ray_hit(Point::new(0.0, 0.0), Point::new(1.0, 0.0))
            .unwrap();
        assert!(close(t, 8.0));
        assert!(r
            .ray_hit(Point::new(0.0, 0.0), Point::new(-1.0, 0.0))
            .is_none());
        assert!(r
            .ray_hit(Point::new(0.0, 5.0), Point::new(1.0, 0.0))
            .is_none());
    }

    #[test]
    fn ray_segment_basic() {
        let t = ray_segment(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(5.0, -1.0),
            Point::new(5.0, 1.0),
        );
        assert!(close(t.unwrap(), 5.0));
        assert!(ray_segment(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(5.0, 0.0)
        )
        .is_none());
    }

    #[test]
    fn segment_intersection() {
        let o = Point::new(0.0, 0.0);
        assert!(segments_intersect(
            o,
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(2.0, 0.0)
        ));
        assert!(!segments_intersect(
            o,
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0)
        ));
    }
}
