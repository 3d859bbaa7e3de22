//! Static road world: rectilinear two-lane roads between junctions, parked
//! cars, the target and the vehicle's start pose.
//!
//! Conventions: a road's `endpoints.0` is its west (or south) end. A lane
//! is a road plus a travel direction; vehicles keep right, so the lane
//! centreline is offset a quarter road width to the right of the road
//! centreline. Each junction owns a `road_width` square ("junction box")
//! shared by all incident roads.

use crate::geom::{OrientedRect, Point, Pose, Rect};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(JunctionId);
id_type!(RoadId);
id_type!(ObstacleId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    EastWest,
    NorthSouth,
}

impl Axis {
    /// Unit vector pointing from `endpoints.0` to `endpoints.1`.
    pub fn unit(self) -> Point {
        match self {
            Axis::EastWest => Point::new(1.0, 0.0),
            Axis::NorthSouth => Point::new(0.0, 1.0),
        }
    }
}

/// One of the four compass directions a road can leave a junction in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Compass {
    East,
    North,
    West,
    South,
}

impl Compass {
    pub const ALL: [Compass; 4] = [Compass::East, Compass::North, Compass::West, Compass::South];

    pub fn unit(self) -> Point {
        match self {
            Compass::East => Point::new(1.0, 0.0),
            Compass::North => Point::new(0.0, 1.0),
            Compass::West => Point::new(-1.0, 0.0),
            Compass::South => Point::new(0.0, -1.0),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Compass::East | Compass::West => Axis::EastWest,
            Compass::North | Compass::South => Axis::NorthSouth,
        }
    }

    pub fn opposite(self) -> Compass {
        match self {
            Compass::East => Compass::West,
            Compass::North => Compass::South,
            Compass::West => Compass::East,
            Compass::South => Compass::North,
        }
    }

    pub fn heading(self) -> f64 {
        self.unit().angle()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: JunctionId,
    pub position: Point,
    /// Number of incident roads: 1 dead-end, 2 bend/continuation, 3 T.
    pub degree: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: RoadId,
    pub endpoints: (JunctionId, JunctionId),
    pub axis: Axis,
    /// Full width of both lanes.
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LaneDir {
    /// Travel from `endpoints.0` to `endpoints.1`.
    Forward,
    Backward,
}

impl LaneDir {
    pub fn reversed(self) -> LaneDir {
        match self {
            LaneDir::Forward => LaneDir::Backward,
            LaneDir::Backward => LaneDir::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaneRef {
    pub road: RoadId,
    pub dir: LaneDir,
}

impl LaneRef {
    pub fn new(road: RoadId, dir: LaneDir) -> Self {
        Self { road, dir }
    }

    pub fn reversed(self) -> LaneRef {
        LaneRef::new(self.road, self.dir.reversed())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkedObstacle {
    pub id: ObstacleId,
    pub footprint: OrientedRect,
    pub lane: LaneRef,
}

/// Initial state of a moving car: distance `offset` along `lane` from the
/// lane's entry junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingCarStart {
    pub id: u32,
    pub lane: LaneRef,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub bounds: Rect,
    pub road_width: f64,
    pub min_junction_separation: f64,
    pub car_length: f64,
    pub car_width: f64,
    pub junctions: Vec<Junction>,
    pub roads: Vec<RoadSegment>,
    pub parked: Vec<ParkedObstacle>,
    pub moving_cars: Vec<MovingCarStart>,
    pub target: Point,
    pub ar_start: Pose,
    pub moving_car_count: u32,
    pub external_seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("point ({x}, {y}) is not on a road surface")]
    OffRoadPoint { x: f64, y: f64 },
    #[error("map file: {0}")]
    Format(String),
}

impl WorldMap {
    pub fn junction(&self, id: JunctionId) -> &Junction {
        &self.junctions[id.index()]
    }

    pub fn road(&self, id: RoadId) -> &RoadSegment {
        &self.roads[id.index()]
    }

    pub fn road_ends(&self, id: RoadId) -> (Point, Point) {
        let r = self.road(id);
        (
            self.junction(r.endpoints.0).position,
            self.junction(r.endpoints.1).position,
        )
    }

    pub fn road_length(&self, id: RoadId) -> f64 {
        let (a, b) = self.road_ends(id);
        a.dist(b)
    }

    /// Driveable rectangle of a road, including both junction boxes.
    pub fn road_surface(&self, id: RoadId) -> Rect {
        let (a, b) = self.road_ends(id);
        let h = self.road(id).width / 2.0;
        Rect::new(
            Point::new(a.x.min(b.x) - h, a.y.min(b.y) - h),
            Point::new(a.x.max(b.x) + h, a.y.max(b.y) + h),
        )
    }

    pub fn junction_box(&self, id: JunctionId) -> Rect {
        let p = self.junction(id).position;
        let h = self.road_width / 2.0;
        Rect::new(Point::new(p.x - h, p.y - h), Point::new(p.x + h, p.y + h))
    }

    pub fn lane_entry(&self, lane: LaneRef) -> JunctionId {
        let r = self.road(lane.road);
        match lane.dir {
            LaneDir::Forward => r.endpoints.0,
            LaneDir::Backward => r.endpoints.1,
        }
    }

    pub fn lane_exit(&self, lane: LaneRef) -> JunctionId {
        self.lane_entry(lane.reversed())
    }

    /// Unit travel direction of a lane.
    pub fn lane_direction(&self, lane: LaneRef) -> Point {
        let u = self.road(lane.road).axis.unit();
        match lane.dir {
            LaneDir::Forward => u,
            LaneDir::Backward => -u,
        }
    }

    /// Point on the lane centreline at distance `s` from the entry junction.
    pub fn lane_point(&self, lane: LaneRef, s: f64) -> Point {
        let d = self.lane_direction(lane);
        let start = self.junction(self.lane_entry(lane)).position;
        start + d * s + d.right() * (self.road(lane.road).width / 4.0)
    }

    pub fn lane_pose(&self, lane: LaneRef, s: f64) -> Pose {
        Pose::new(self.lane_point(lane, s), self.lane_direction(lane).angle())
    }

    /// Longitudinal coordinate of `p` along `lane`, unclamped.
    pub fn lane_coordinate(&self, lane: LaneRef, p: Point) -> f64 {
        let start = self.junction(self.lane_entry(lane)).position;
        (p - start).dot(self.lane_direction(lane))
    }

    /// Signed lateral offset of `p` from the *road* centreline, positive on
    /// the left of the lane's travel direction (i.e. toward oncoming traffic).
    pub fn lane_lateral(&self, lane: LaneRef, p: Point) -> f64 {
        let start = self.junction(self.lane_entry(lane)).position;
        (p - start).dot(self.lane_direction(lane).left())
    }

    pub fn car_footprint(&self, pose: &Pose) -> OrientedRect {
        OrientedRect::new(pose.position, pose.heading, self.car_length, self.car_width)
    }

    /// Roads incident to `j`, in road-id order.
    pub fn incident_roads(&self, j: JunctionId) -> Vec<RoadId> {
        self.roads
            .iter()
            .filter(|r| r.endpoints.0 == j || r.endpoints.1 == j)
            .map(|r| r.id)
            .collect()
    }

    pub fn other_end(&self, road: RoadId, j: JunctionId) -> JunctionId {
        let r = self.road(road);
        if r.endpoints.0 == j {
            r.endpoints.1
        } else {
            r.endpoints.0
        }
    }

    /// The lane of `road` that leaves junction `j`.
    pub fn lane_leaving(&self, road: RoadId, j: JunctionId) -> LaneRef {
        if self.road(road).endpoints.0 == j {
            LaneRef::new(road, LaneDir::Forward)
        } else {
            LaneRef::new(road, LaneDir::Backward)
        }
    }

    pub fn compass_from(&self, j: JunctionId, road: RoadId) -> Compass {
        let d = self.lane_direction(self.lane_leaving(road, j));
        if d.x > 0.5 {
            Compass::East
        } else if d.x < -0.5 {
            Compass::West
        } else if d.y > 0.0 {
            Compass::North
        } else {
            Compass::South
        }
    }

    pub fn dead_ends(&self) -> Vec<JunctionId> {
        self.junctions
            .iter()
            .filter(|j| j.degree == 1)
            .map(|j| j.id)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("map serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<WorldMap, WorldError> {
        serde_json::from_str(s).map_err(|e| WorldError::Format(e.to_string()))
    }
}

/// True iff `p` lies inside the map bounds and on some road rectangle.
pub fn on_road(map: &WorldMap, p: Point) -> bool {
    map.bounds.contains(p) && map.roads.iter().any(|r| map.road_surface(r.id).contains(p))
}

/// Where a point sits on the network: inside a junction box, or on the
/// box-free part of one road at distance `t` from `endpoints.0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetPos {
    Junction(JunctionId),
    Road { road: RoadId, t: f64 },
}

/// Precomputed network metric: all-pairs junction distances plus point
/// location. Points inside a junction box are snapped to the junction, so
/// the distance is a true metric on the augmented graph.
#[derive(Debug, Clone)]
pub struct Network {
    dist: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(map: &WorldMap) -> Self {
        let n = map.junctions.len();
        let mut dist = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for r in &map.roads {
            let (a, b) = (r.endpoints.0.index(), r.endpoints.1.index());
            if a >= n || b >= n {
                continue;
            }
            let l = map.road_length(r.id);
            if l < dist[a][b] {
                dist[a][b] = l;
                dist[b][a] = l;
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = dist[i][k];
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let alt = dik + dist[k][j];
                    if alt < dist[i][j] {
                        dist[i][j] = alt;
                    }
                }
            }
        }
        Self { dist }
    }

    pub fn junction_distance(&self, a: JunctionId, b: JunctionId) -> f64 {
        self.dist[a.index()][b.index()]
    }

    pub fn locate(map: &WorldMap, p: Point) -> Option<NetPos> {
        if !map.bounds.contains(p) {
            return None;
        }
        for j in &map.junctions {
            if map.junction_box(j.id).contains(p) {
                return Some(NetPos::Junction(j.id));
            }
        }
        for r in &map.roads {
            if map.road_surface(r.id).contains(p) {
                let (a, _) = map.road_ends(r.id);
                let t = (p - a).dot(r.axis.unit()).clamp(0.0, map.road_length(r.id));
                return Some(NetPos::Road { road: r.id, t });
            }
        }
        None
    }

    /// Distances from a network position to each endpoint junction it can
    /// leave through, as `(junction, distance)` pairs.
    fn exits(map: &WorldMap, pos: NetPos) -> Vec<(JunctionId, f64)> {
        match pos {
            NetPos::Junction(j) => vec![(j, 0.0)],
            NetPos::Road { road, t } => {
                let r = map.road(road);
                vec![
                    (r.endpoints.0, t),
                    (r.endpoints.1, map.road_length(road) - t),
                ]
            }
        }
    }

    pub fn distance(&self, map: &WorldMap, a: NetPos, b: NetPos) -> f64 {
        let mut best = f64::INFINITY;
        if let (NetPos::Road { road: ra, t: ta }, NetPos::Road { road: rb, t: tb }) = (a, b) {
            if ra == rb {
                best = (ta - tb).abs();
            }
        }
        for (ja, da) in Self::exits(map, a) {
            for (jb, db) in Self::exits(map, b) {
                best = best.min(da + self.junction_distance(ja, jb) + db);
            }
        }
        best
    }

    pub fn point_distance(&self, map: &WorldMap, a: Point, b: Point) -> Result<f64, WorldError> {
        let pa = Self::locate(map, a).ok_or(WorldError::OffRoadPoint { x: a.x, y: a.y })?;
        let pb = Self::locate(map, b).ok_or(WorldError::OffRoadPoint { x: b.x, y: b.y })?;
        Ok(self.distance(map, pa, pb))
    }
}

/// Length of the shortest along-road path between two on-road points.
pub fn network_shortest_path(map: &WorldMap, a: Point, b: Point) -> Result<f64, WorldError> {
    Network::new(map).point_distance(map, a, b)
}

/// Kind of validation rule a map breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    Malformed,
    JunctionSeparation,
    Bounds,
    RoadGeometry,
    JunctionDegree,
    Overlap,
    Connectivity,
    OnRoadPlacement,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Malformed => "malformed",
            Rule::JunctionSeparation => "junction separation",
            Rule::Bounds => "bounds",
            Rule::RoadGeometry => "road geometry",
            Rule::JunctionDegree => "junction degree",
            Rule::Overlap => "overlap",
            Rule::Connectivity => "connectivity",
            Rule::OnRoadPlacement => "on-road placement",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule.name(), self.detail)
    }
}

/// Checks every structural rule; an empty result means the map is valid.
/// A pair of junctions closer than the minimum separation is reported once,
/// and the overlaps or short roads that follow from it are not repeated.
pub fn validate_map(map: &WorldMap) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule: Rule, detail: String| out.push(Violation { rule, detail });

    let nj = map.junctions.len();
    let nr = map.roads.len();
    let mut malformed = false;
    for (i, j) in map.junctions.iter().enumerate() {
        if j.id.index() != i || !j.position.is_finite() {
            push(Rule::Malformed, format!("junction {i} id/position"));
            malformed = true;
        }
    }
    for (i, r) in map.roads.iter().enumerate() {
        if r.id.index() != i || r.endpoints.0.index() >= nj || r.endpoints.1.index() >= nj {
            push(Rule::Malformed, format!("road {i} id/endpoints"));
            malformed = true;
        }
    }
    for (i, p) in map.parked.iter().enumerate() {
        if p.id.index() != i || p.lane.road.index() >= nr {
            push(Rule::Malformed, format!("parked obstacle {i} id/lane"));
            malformed = true;
        }
    }
    for m in &map.moving_cars {
        if m.lane.road.index() >= nr || !m.offset.is_finite() {
            push(Rule::Malformed, format!("moving car {} lane", m.id));
            malformed = true;
        }
    }
    if map.moving_car_count as usize != map.moving_cars.len() {
        push(
            Rule::Malformed,
            format!(
                "moving_car_count {} != {} placed",
                map.moving_car_count,
                map.moving_cars.len()
            ),
        );
    }
    if !(map.road_width > 0.0) || !map.target.is_finite() || !map.ar_start.position.is_finite() {
        push(Rule::Malformed, "non-finite or non-positive scalar".into());
        malformed = true;
    }
    if malformed {
        return out;
    }

    for j in &map.junctions {
        if !map.bounds.contains(j.position) {
            push(Rule::Bounds, format!("junction {} outside map", j.id));
        }
    }

    let sep = map.min_junction_separation;
    let mut close_pairs = BTreeSet::new();
    for a in 0..nj {
        for b in (a + 1)..nj {
            let d = map.junctions[a].position.dist(map.junctions[b].position);
            if d < sep {
                close_pairs.insert((a, b));
                push(
                    Rule::JunctionSeparation,
                    format!("junctions {a} and {b} are {d:.2} m apart (< {sep:.2} m)"),
                );
            }
        }
    }
    let is_close = |a: JunctionId, b: JunctionId| {
        let (x, y) = (a.index().min(b.index()), a.index().max(b.index()));
        close_pairs.contains(&(x, y))
    };

    for r in &map.roads {
        let (ja, jb) = r.endpoints;
        if ja == jb {
            push(
                Rule::RoadGeometry,
                format!("road {} has identical endpoints", r.id),
            );
            continue;
        }
        let (a, b) = map.road_ends(r.id);
        let aligned = match r.axis {
            Axis::EastWest => a.y == b.y && a.x < b.x,
            Axis::NorthSouth => a.x == b.x && a.y < b.y,
        };
        if !aligned {
            push(
                Rule::RoadGeometry,
                format!("road {} is not an ordered {:?} segment", r.id, r.axis),
            );
        }
        if r.width != map.road_width {
            push(
                Rule::RoadGeometry,
                format!("road {} width {} != {}", r.id, r.width, map.road_width),
            );
        }
        if a.dist(b) < sep && !is_close(ja, jb) {
            push(
                Rule::RoadGeometry,
                format!("road {} shorter than {sep:.2} m", r.id),
            );
        }
        if !map.bounds.contains_rect(&map.road_surface(r.id)) {
            push(
                Rule::Bounds,
                format!("road {} extends beyond the map", r.id),
            );
        }
    }

    let mut incident: Vec<Vec<RoadId>> = vec![Vec::new(); nj];
    for r in &map.roads {
        if r.endpoints.0 != r.endpoints.1 {
            incident[r.endpoints.0.index()].push(r.id);
            incident[r.endpoints.1.index()].push(r.id);
        }
    }
    for j in &map.junctions {
        let inc = &incident[j.id.index()];
        if inc.len() != j.degree as usize || !(1..=3).contains(&j.degree) {
            push(
                Rule::JunctionDegree,
                format!(
                    "junction {} degree {} with {} incident roads",
                    j.id,
                    j.degree,
                    inc.len()
                ),
            );
        }
        let dirs: BTreeSet<Compass> = inc.iter().map(|r| map.compass_from(j.id, *r)).collect();
        if dirs.len() != inc.len() {
            push(
                Rule::JunctionDegree,
                format!("junction {} has two roads leaving in one direction", j.id),
            );
        }
    }

    for x in 0..nr {
        for y in (x + 1)..nr {
            let (rx, ry) = (&map.roads[x], &map.roads[y]);
            let ex = [rx.endpoints.0, rx.endpoints.1];
            let ey = [ry.endpoints.0, ry.endpoints.1];
            let shares = ex.iter().any(|e| ey.contains(e));
            let near = ex.iter().any(|a| ey.iter().any(|b| is_close(*a, *b)));
            if shares || near {
                continue;
            }
            if map.road_surface(rx.id).overlaps(&map.road_surface(ry.id)) {
                push(
                    Rule::Overlap,
                    format!("roads {} and {} overlap", rx.id, ry.id),
                );
            }
        }
    }

    if nr == 0 {
        push(Rule::Connectivity, "no roads".into());
    } else {
        let mut seen = vec![false; nj];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for r in &incident[j] {
                let o = map.other_end(*r, JunctionId(j as u32)).index();
                if !seen[o] {
                    seen[o] = true;
                    stack.push(o);
                }
            }
        }
        let unreached = seen.iter().filter(|s| !**s).count();
        if unreached > 0 {
            push(
                Rule::Connectivity,
                format!("{unreached} junctions unreachable from junction 0"),
            );
        }
    }

    for p in &map.parked {
        let surface = map.road_surface(p.lane.road);
        if !p.footprint.corners().iter().all(|c| surface.contains(*c)) {
            push(
                Rule::OnRoadPlacement,
                format!("parked obstacle {} is not on road {}", p.id, p.lane.road),
            );
        }
    }
    for a in 0..map.parked.len() {
        for b in (a + 1)..map.parked.len() {
            if map.parked[a].footprint.intersects(&map.parked[b].footprint) {
                push(
                    Rule::Overlap,
                    format!("parked obstacles {a} and {b} overlap"),
                );
            }
        }
    }

    if !on_road(map, map.target) {
        push(Rule::OnRoadPlacement, "target is off the road".into());
    }
    if !on_road(map, map.ar_start.position) {
        push(
            Rule::OnRoadPlacement,
            "vehicle start is off the road".into(),
        );
    }
    let ar = map.car_footprint(&map.ar_start);
    for p in &map.parked {
        if ar.intersects(&p.footprint) {
            push(
                Rule::Overlap,
                format!("vehicle start overlaps parked obstacle {}", p.id),
            );
        }
    }

    let mut moving = Vec::new();
    for m in &map.moving_cars {
        let len = map.road_length(m.lane.road);
        if !(0.0..=len).contains(&m.offset) {
            push(
                Rule::OnRoadPlacement,
                format!("moving car {} offset outside its road", m.id),
            );
            continue;
        }
        let fp = map.car_footprint(&map.lane_pose(m.lane, m.offset));
        if map.parked.iter().any(|p| p.footprint.intersects(&fp)) || fp.intersects(&ar) {
            push(
                Rule::Overlap,
                format!("moving car {} overlaps an obstacle", m.id),
            );
        }
        if moving.iter().any(|o: &OrientedRect| o.intersects(&fp)) {
            push(
                Rule::Overlap,
                format!("moving car {} overlaps another moving car", m.id),
            );
        }
        moving.push(fp);
    }
    out
}

#[cfg(test)]
pub(crate) use crate::scenarios as fixtures;
