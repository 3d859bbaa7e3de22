//! Road-marking and obstacle sensing.

use super::faults::{FaultId, TriggerLog};
use super::SutError;
use crate::geom::{ray_segment, wrap_angle, OrientedRect, Point, Pose, RectFrame};
use crate::world::{Compass, ObstacleId, WorldMap};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorParams {
    /// Marking scan arc relative to heading, degrees, scanned low to high.
    pub marking_arc: [f64; 2],
    /// Degrees between marking rays.
    pub marking_resolution: f64,
    pub marking_range: f64,
    pub obstacle_range: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            marking_arc: [-90.0, 90.0],
            marking_resolution: 2.0,
            marking_range: 30.0,
            obstacle_range: 100.0,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<(), SutError> {
        let [lo, hi] = self.marking_arc;
        if !(lo < hi)
            || !(self.marking_resolution > 0.0)
            || !(self.marking_range > 0.0)
            || !(self.obstacle_range > 0.0)
        {
            return Err(SutError::InvalidParams(
                "sensor arc, resolution and ranges must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkingKind {
    Centreline,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marking {
    pub a: Point,
    pub b: Point,
    pub kind: MarkingKind,
}

/// All painted lines of a map: road centrelines and edges between junction
/// boxes, plus the sides of each junction box that no road leaves through.
#[derive(Debug, Clone)]
pub struct Markings {
    lines: Vec<Marking>,
}

impl Markings {
    pub fn new(map: &WorldMap) -> Self {
        let mut lines = Vec::new();
        let h = map.road_width / 2.0;
        for r in &map.roads {
            let (a, b) = map.road_ends(r.id);
            let u = r.axis.unit();
            let v = u.left();
            let (a, b) = (a + u * h, b - u * h);
            lines.push(Marking {
                a,
                b,
                kind: MarkingKind::Centreline,
            });
            lines.push(Marking {
                a: a + v * h,
                b: b + v * h,
                kind: MarkingKind::Edge,
            });
            lines.push(Marking {
                a: a - v * h,
                b: b - v * h,
                kind: MarkingKind::Edge,
            });
        }
        for j in &map.junctions {
            let used: Vec<Compass> = map
                .incident_roads(j.id)
                .iter()
                .map(|r| map.compass_from(j.id, *r))
                .collect();
            for c in Compass::ALL {
                if used.contains(&c) {
                    continue;
                }
                let n = c.unit();
                let mid = j.position + n * h;
                let t = n.left() * h;
                lines.push(Marking {
                    a: mid - t,
                    b: mid + t,
                    kind: MarkingKind::Edge,
                });
            }
        }
        Self { lines }
    }

    pub fn lines(&self) -> &[Marking] {
        &self.lines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkingHit {
    /// Radians relative to heading, left positive.
    pub bearing: f64,
    pub range: f64,
    pub kind: MarkingKind,
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let e = b - a;
    let len2 = e.dot(e);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(e) / len2).clamp(0.0, 1.0)
    };
    p.dist(a + e * t)
}

/// Casts the marking rays from `pose` and reports the nearest marking on
/// each. Faults 8, 10 and 12 thin the result; each ray hit they remove is
/// one trigger.
pub fn scan_road_markings(
    markings: &Markings,
    pose: &Pose,
    params: &SensorParams,
    log: &mut TriggerLog,
) -> Vec<MarkingHit> {
    let range = params.marking_range;
    let near: Vec<&Marking> = markings
        .lines
        .iter()
        .filter(|m| segment_distance(pose.position, m.a, m.b) <= range)
        .collect();
    let [lo, hi] = params.marking_arc;
    let n = ((hi - lo) / params.marking_resolution + 1e-9).floor() as usize + 1;
    let mid = (lo + hi) / 2.0;
    let coarse = log.is_on(FaultId::SCAN_RESOLUTION);
    let half_arc = log.is_on(FaultId::SCAN_HALF_ARC);
    let short = log.is_on(FaultId::SCAN_RANGE);

    // Ray directions by repeated rotation: one sin/cos pair per scan.
    let res = params.marking_resolution.to_radians();
    let step = Point::from_heading(res);
    let base = pose.heading + lo.to_radians();
    let mut dirs = Vec::with_capacity(n);
    let mut dir = Point::from_heading(base);
    for i in 0..n {
        if i > 0 {
            dir = Point::new(
                dir.x * step.x - dir.y * step.y,
                dir.x * step.y + dir.y * step.x,
            );
        }
        dirs.push(dir);
    }

    // Each marking is only tested against the rays inside the angle it
    // subtends, widened by one ray on both sides.
    let o = pose.position;
    let mut best: Vec<Option<(f64, MarkingKind)>> = vec![None; n];
    let mut test = |i: usize, m: &Marking| {
        if let Some(t) = ray_segment(o, dirs[i], m.a, m.b) {
            if t <= range && best[i].is_none_or(|(bt, _)| t < bt) {
                best[i] = Some((t, m.kind));
            }
        }
    };
    for m in &near {
        let (da, db) = (m.a - o, m.b - o);
        if da.cross(db).abs() < 1e-9 {
            (0..n).for_each(|i| test(i, m));
            continue;
        }
        let w = wrap_angle(db.angle() - da.angle());
        let start = (if w >= 0.0 { da.angle() } else { db.angle() } - base).rem_euclid(TAU);
        let (s0, s1) = (start - res, start + w.abs() + res);
        for shift in [-TAU, 0.0, TAU] {
            let first = ((s0 + shift) / res).ceil().max(0.0);
            let last = ((s1 + shift) / res).floor().min(n as f64 - 1.0);
            if first <= last {
                (first as usize..=last as usize).for_each(|i| test(i, m));
            }
        }
    }

    let mut hits = Vec::new();
    let (mut lost_res, mut lost_arc, mut lost_range) = (0, 0, 0);
    for (i, best) in best.into_iter().enumerate() {
        let deg = lo + i as f64 * params.marking_resolution;
        let bearing = deg.to_radians();
        let Some((t, kind)) = best else { continue };
        if coarse && i % 2 == 1 {
            lost_res += 1;
            continue;
        }
        if half_arc && deg < mid {
            lost_arc += 1;
            continue;
        }
        if short && t > range / 2.0 {
            lost_range += 1;
            continue;
        }
        hits.push(MarkingHit {
            bearing,
            range: t,
            kind,
        });
    }
    log.hit(FaultId::SCAN_RESOLUTION, lost_res);
    log.hit(FaultId::SCAN_HALF_ARC, lost_arc);
    log.hit(FaultId::SCAN_RANGE, lost_range);
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObstacleRef {
    Parked(ObstacleId),
    Car(u32),
}

/// Something the vehicle can see, with its visible angular extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub source: ObstacleRef,
    pub footprint: OrientedRect,
    /// Bearing of the footprint centre relative to heading.
    pub bearing: f64,
    /// Nearest hit distance over the probe rays that reach it first.
    pub range: f64,
    /// Visible bearings (relative to heading), lowest and highest.
    pub visible_extent: (f64, f64),
    /// Unit vector along the footprint's long axis pointing away from the
    /// observer.
    pub far_dir: Point,
    /// The space one car-length beyond the far end cannot be seen.
    pub far_end_occluded: bool,
}

fn nearest_hit(frames: &[RectFrame], origin: Point, dir: Point) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, fp) in frames.iter().enumerate() {
        if let Some(t) = fp.ray_hit(origin, dir) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((i, t));
            }
        }
    }
    best
}

/// 360-degree obstacle scan with exact occlusion. An obstacle is in range
/// when its nearest point is within `obstacle_range`; it is visible when
/// some ray from the vehicle reaches it before any other obstacle.
///
/// Between two consecutive corner bearings the front-to-back order of
/// disjoint convex footprints cannot change, so one ray per interval decides
/// visibility exactly.
pub fn scan_obstacles(
    obstacles: &[(ObstacleRef, OrientedRect)],
    pose: &Pose,
    params: &SensorParams,
) -> Vec<Detection> {
    let origin = pose.position;
    let cands: Vec<(ObstacleRef, OrientedRect)> = obstacles
        .iter()
        .filter(|(_, fp)| fp.distance_to_point(origin) <= params.obstacle_range)
        .copied()
        .collect();
    if cands.is_empty() {
        return Vec::new();
    }
    let frames: Vec<RectFrame> = cands.iter().map(|(_, fp)| fp.frame()).collect();
    let mut angles: Vec<f64> = cands
        .iter()
        .flat_map(|(_, fp)| fp.corners())
        .map(|c| (c - origin).angle())
        .collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();

    // Per candidate: nearest hit distance, visible bearing range. Rays
    // exactly through a corner are skipped; they only graze.
    let mut seen: Vec<Option<(f64, f64, f64)>> = vec![None; cands.len()];
    let mut probe = |a: f64| {
        if let Some((i, t)) = nearest_hit(&frames, origin, Point::from_heading(a)) {
            let b = wrap_angle(a - pose.heading);
            seen[i] = Some(match seen[i] {
                None => (t, b, b),
                Some((r, lo, hi)) => (r.min(t), lo.min(b), hi.max(b)),
            });
        }
    };
    for w in 0..angles.len() {
        let a = angles[w];
        let next = if w + 1 < angles.len() {
            angles[w + 1]
        } else {
            angles[0] + std::f64::consts::TAU
        };
        probe((a + next) / 2.0);
    }

    let mut out = Vec::new();
    for (i, (source, fp)) in cands.iter().enumerate() {
        let Some((range, lo, hi)) = seen[i] else {
            continue;
        };
        let (u, _) = fp.axes();
        let far_dir = if (fp.centre - origin).dot(u) >= 0.0 {
            u
        } else {
            -u
        };
        let far_end_occluded = match source {
            ObstacleRef::Parked(_) => {
                let beyond = fp.centre + far_dir * fp.length;
                let to = beyond - origin;
                let d = to.norm();
                d > 0.0 && nearest_hit(&frames, origin, to * (1.0 / d)).is_some_and(|(_, t)| t < d)
            }
            ObstacleRef::Car(_) => false,
        };
        out.push(Detection {
            source: *source,
            footprint: *fp,
            bearing: pose.bearing_to(fp.centre),
            range,
            visible_extent: (lo, hi),
            far_dir,
            far_end_occluded,
        });
    }
    out
}

/// One hypothetical car-length footprint beyond every parked-car detection
/// whose far end is hidden.
pub fn predict_hidden_extension(detections: &[Detection]) -> Vec<OrientedRect> {
    detections
        .iter()
        .filter(|d| matches!(d.source, ObstacleRef::Parked(_)) && d.far_end_occluded)
        .map(|d| OrientedRect {
            centre: d.footprint.centre + d.far_dir * d.footprint.length,
            ..d.footprint
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub step: u64,
    pub position: Point,
}

/// Constant-velocity extrapolation from the last two samples: positions at
/// each of the `horizon_steps` steps after the last sample.
pub fn predict_trajectory(
    history: &[TrackSample],
    horizon_steps: u32,
) -> Result<Vec<Point>, SutError> {
    let [.., a, b] = history else {
        return Err(SutError::InsufficientHistory(history.len()));
    };
    let gap = b.step.saturating_sub(a.step).max(1) as f64;
    let v = (b.position - a.position) * (1.0 / gap);
    Ok((1..=horizon_steps)
        .map(|k| b.position + v * k as f64)
        .collect())
}
