//! Navigation, waypoint generation and the per-step control law.

use super::faults::{FaultId, FaultSet, TriggerLog};
use super::sensing::{
    predict_hidden_extension, predict_trajectory, scan_obstacles, scan_road_markings, Detection,
    MarkingHit, MarkingKind, Markings, ObstacleRef, SensorParams, TrackSample,
};
use super::SutError;
use crate::geom::{wrap_angle, OrientedRect, Point, Pose};
use crate::rng::SeededRng;
use crate::world::{JunctionId, LaneDir, LaneRef, NetPos, Network, RoadId, WorldMap};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Tunable constants of the controller. Distances in metres, speeds in
/// metres per second, rates per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub sensor: SensorParams,
    pub lookahead: f64,
    /// Lookahead used close to a turn.
    pub turn_lookahead: f64,
    /// Proportional gain from waypoint bearing (rad) to turn rate (rad/s).
    pub steer_gain: f64,
    pub max_steer: f64,
    pub cruise_speed: f64,
    pub turn_speed: f64,
    pub uturn_speed: f64,
    pub uturn_rate: f64,
    pub accel: f64,
    pub brake: f64,
    /// Deceleration assumed when planning stops; gentler than `brake`.
    pub plan_brake: f64,
    /// Slowest speed the marking-visibility limit may impose.
    pub min_visual_speed: f64,
    pub follow_gap: f64,
    pub overtake_speed: f64,
    pub overtake_lookahead: f64,
    /// Largest gap to a blocking car at which an overtake may start.
    pub overtake_decision_gap: f64,
    /// Smallest gap to the blocking car from which an overtake may start.
    pub overtake_min_gap: f64,
    /// Gap kept when waiting behind a blocking car.
    pub queue_gap: f64,
    pub overtake_return_margin: f64,
    pub overtake_timeout_steps: u64,
    /// Prediction horizon of the clearance check, in steps.
    pub clearance_horizon_steps: u32,
    /// How far past the obstruction the clearance corridor reaches.
    pub clearance_extension: f64,
    /// Fault 2/4 waypoint offset per axis.
    pub waypoint_offset: f64,
    pub target_tolerance: f64,
    pub target_approach_range: f64,
    /// Steps stopped behind an obstruction before turning back.
    pub stuck_uturn_steps: u32,
    pub track_history: usize,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            sensor: SensorParams::default(),
            lookahead: 8.0,
            turn_lookahead: 4.0,
            steer_gain: 2.0,
            max_steer: 1.2,
            cruise_speed: 10.0,
            turn_speed: 4.0,
            uturn_speed: 1.5,
            uturn_rate: 1.0,
            accel: 2.0,
            brake: 4.0,
            plan_brake: 2.5,
            min_visual_speed: 1.0,
            follow_gap: 6.0,
            overtake_speed: 6.0,
            overtake_lookahead: 6.0,
            overtake_decision_gap: 12.0,
            overtake_min_gap: 4.0,
            queue_gap: 6.0,
            overtake_return_margin: 4.0,
            overtake_timeout_steps: 150,
            clearance_horizon_steps: 80,
            clearance_extension: 15.0,
            waypoint_offset: 0.5,
            target_tolerance: 2.0,
            target_approach_range: 40.0,
            stuck_uturn_steps: 400,
            track_history: 5,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), SutError> {
        self.sensor.validate()?;
        let positive = [
            self.lookahead,
            self.turn_lookahead,
            self.steer_gain,
            self.max_steer,
            self.cruise_speed,
            self.turn_speed,
            self.uturn_speed,
            self.uturn_rate,
            self.accel,
            self.brake,
            self.plan_brake,
            self.overtake_speed,
            self.overtake_lookahead,
            self.target_tolerance,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SutError::InvalidParams(
                "gains, speeds and distances must be positive".into(),
            ));
        }
        if self.track_history < 2 {
            return Err(SutError::InvalidParams("track_history must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Driving,
    Overtaking,
    UTurning,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Driving => "Driving",
            Mode::Overtaking => "Overtaking",
            Mode::UTurning => "UTurning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OvertakePhase {
    /// In or moving into the opposing lane.
    PullOut,
    /// Past the obstruction, returning to the own lane.
    Return,
    /// Clearance lost before reaching the obstruction; falling back behind it.
    Abort,
}

/// The obstruction being overtaken, as lane coordinates of its near and far
/// ends along `lane`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvertakeContext {
    pub lane: LaneRef,
    pub start: f64,
    pub end: f64,
    pub entry_step: u64,
    pub entry_steer: Option<f64>,
    pub phase: OvertakePhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub pose: Pose,
    pub speed: f64,
    pub step: u64,
    pub lane: LaneRef,
    /// Lane to take at the end of `lane`; `None` means U-turn at a dead end.
    pub next_lane: Option<LaneRef>,
    pub visited_roads: BTreeSet<RoadId>,
    pub current_waypoint: Option<Point>,
    pub mode: Mode,
    pub overtake: Option<OvertakeContext>,
    pub tracks: BTreeMap<u32, Vec<TrackSample>>,
    pub triggers: TriggerLog,
    pub blocked_steps: u32,
}

impl ControllerState {
    /// Occupying the opposing lane is currently justified.
    pub fn justified(&self) -> bool {
        self.mode == Mode::Overtaking && self.overtake.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Readings {
    pub markings: Vec<MarkingHit>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actuation {
    /// Turn rate, radians per second, left positive.
    pub steer: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JunctionChoice {
    Road(RoadId),
    /// Dead end: turn around onto the arrival road.
    UTurn(RoadId),
}

/// Per-run controller: the static knowledge the vehicle carries (map,
/// network distances, target position) and its parameters.
#[derive(Debug, Clone)]
pub struct Controller<'m> {
    map: &'m WorldMap,
    params: ControllerParams,
    net: Network,
    markings: Markings,
    target: Option<NetPos>,
}

impl<'m> Controller<'m> {
    pub fn new(map: &'m WorldMap, params: ControllerParams) -> Self {
        Self {
            map,
            net: Network::new(map),
            markings: Markings::new(map),
            target: Network::locate(map, map.target),
            params,
        }
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn markings(&self) -> &Markings {
        &self.markings
    }

    /// State at the start pose. Draws the first route choice from `rng`.
    pub fn initial_state(&self, faults: FaultSet, rng: &mut SeededRng) -> ControllerState {
        let pose = self.map.ar_start;
        let lane = locate_lane(self.map, &pose);
        let mut st = ControllerState {
            pose,
            speed: 0.0,
            step: 0,
            lane,
            next_lane: None,
            visited_roads: BTreeSet::from([lane.road]),
            current_waypoint: None,
            mode: Mode::Driving,
            overtake: None,
            tracks: BTreeMap::new(),
            triggers: TriggerLog::new(faults),
            blocked_steps: 0,
        };
        st.next_lane = self.plan_next(&st, lane, rng);
        st
    }

    pub fn sense(
        &self,
        state: &mut ControllerState,
        obstacles: &[(ObstacleRef, OrientedRect)],
    ) -> Readings {
        Readings {
            markings: scan_road_markings(
                &self.markings,
                &state.pose,
                &self.params.sensor,
                &mut state.triggers,
            ),
            detections: scan_obstacles(obstacles, &state.pose, &self.params.sensor),
        }
    }

    /// Picks the road to leave junction `j` by, having arrived on `arrival`.
    /// Unvisited roads are preferred; within the preferred tier the draw is
    /// weighted by `1 / (1 + d)` where `d` is the network distance from the
    /// road's far end to the target.
    pub fn choose_road_at_junction(
        &self,
        visited: &BTreeSet<RoadId>,
        j: JunctionId,
        arrival: RoadId,
        rng: &mut SeededRng,
    ) -> JunctionChoice {
        let cands: Vec<RoadId> = self
            .map
            .incident_roads(j)
            .into_iter()
            .filter(|r| *r != arrival)
            .collect();
        if cands.is_empty() {
            return JunctionChoice::UTurn(arrival);
        }
        let fresh: Vec<RoadId> = cands
            .iter()
            .copied()
            .filter(|r| !visited.contains(r))
            .collect();
        let tier = if fresh.is_empty() { cands } else { fresh };
        let weights: Vec<f64> = tier
            .iter()
            .map(|r| {
                let far = self.map.other_end(*r, j);
                match self.target {
                    Some(t) => 1.0 / (1.0 + self.net.distance(self.map, NetPos::Junction(far), t)),
                    None => 1.0,
                }
            })
            .collect();
        let i = rng.weighted_index(&weights).unwrap_or(0);
        JunctionChoice::Road(tier[i])
    }

    fn plan_next(
        &self,
        st: &ControllerState,
        lane: LaneRef,
        rng: &mut SeededRng,
    ) -> Option<LaneRef> {
        let j = self.map.lane_exit(lane);
        match self.choose_road_at_junction(&st.visited_roads, j, lane.road, rng) {
            JunctionChoice::Road(r) => Some(self.map.lane_leaving(r, j)),
            JunctionChoice::UTurn(_) => None,
        }
    }

    /// Where the lane lines of `from` and `to` meet, with that point's lane
    /// coordinate on each.
    fn corner(&self, from: LaneRef, to: LaneRef) -> (Point, f64, f64) {
        let d1 = self.map.lane_direction(from);
        let d2 = self.map.lane_direction(to);
        let c = if d1.dot(d2) > 0.5 {
            self.map.lane_point(from, self.map.road_length(from.road))
        } else {
            let p1 = self.map.lane_point(from, 0.0);
            let p2 = self.map.lane_point(to, 0.0);
            if d1.x.abs() > 0.5 {
                Point::new(p2.x, p1.y)
            } else {
                Point::new(p1.x, p2.y)
            }
        };
        (
            c,
            self.map.lane_coordinate(from, c),
            self.map.lane_coordinate(to, c),
        )
    }

    fn is_turn(&self, from: LaneRef, to: LaneRef) -> bool {
        self.map
            .lane_direction(from)
            .dot(self.map.lane_direction(to))
            < 0.5
    }

    /// Moves onto the next lane once the corner is behind the vehicle.
    fn advance_route(&self, st: &mut ControllerState, rng: &mut SeededRng) {
        let Some(next) = st.next_lane else { return };
        let (c, _, _) = self.corner(st.lane, next);
        let rel = st.pose.position - c;
        let hd = st.pose.direction();
        let d1 = self.map.lane_direction(st.lane);
        let d2 = self.map.lane_direction(next);
        let near = rel.dot(d1) >= -self.map.road_width;
        if rel.dot(d1) >= 0.0 || (near && rel.dot(d2) >= 0.0 && hd.dot(d2) >= hd.dot(d1)) {
            self.enter_lane(st, next, rng);
        }
    }

    fn enter_lane(&self, st: &mut ControllerState, lane: LaneRef, rng: &mut SeededRng) {
        st.lane = lane;
        st.visited_roads.insert(lane.road);
        st.next_lane = self.plan_next(st, lane, rng);
        if st.mode == Mode::Overtaking {
            st.mode = Mode::Driving;
            st.overtake = None;
        }
        st.blocked_steps = 0;
    }

    /// Point `la` metres ahead along the planned route, on lane centrelines.
    fn route_point(&self, st: &ControllerState, la: f64) -> Point {
        let s = self.map.lane_coordinate(st.lane, st.pose.position);
        let want = s + la;
        match st.next_lane {
            Some(next) => {
                let (_, s1, s2) = self.corner(st.lane, next);
                if want <= s1 {
                    self.map.lane_point(st.lane, want)
                } else {
                    self.map.lane_point(next, s2 + (want - s1))
                }
            }
            None => self
                .map
                .lane_point(st.lane, want.min(self.map.road_length(st.lane.road))),
        }
    }

    fn route_lookahead(&self, st: &ControllerState) -> f64 {
        if let Some(next) = st.next_lane {
            if self.is_turn(st.lane, next) {
                let (_, s1, _) = self.corner(st.lane, next);
                let s = self.map.lane_coordinate(st.lane, st.pose.position);
                if s1 - s < 2.0 * self.params.lookahead {
                    return self.params.turn_lookahead;
                }
            }
        }
        self.params.lookahead
    }

    /// Records `nominal` as the new waypoint, misplaced by faults 2 and 4
    /// when enabled.
    fn place_waypoint(&self, st: &mut ControllerState, nominal: Point) -> Point {
        let d = self.params.waypoint_offset;
        let mut wp = nominal;
        if st.triggers.is_on(FaultId::WAYPOINT_NE) {
            wp = wp + Point::new(d, d);
            st.triggers.hit(FaultId::WAYPOINT_NE, 1);
        }
        if st.triggers.is_on(FaultId::WAYPOINT_SE) {
            wp = wp + Point::new(d, -d);
            st.triggers.hit(FaultId::WAYPOINT_SE, 1);
        }
        st.current_waypoint = Some(wp);
        wp
    }

    /// The route waypoint for the current state (lane-following).
    pub fn next_waypoint(&self, st: &mut ControllerState) -> Point {
        let la = self.route_lookahead(st);
        let nominal = self.route_point(st, la);
        self.place_waypoint(st, nominal)
    }

    fn steer_towards(&self, st: &ControllerState, wp: Point) -> f64 {
        let m = self.params.max_steer;
        (self.params.steer_gain * st.pose.bearing_to(wp)).clamp(-m, m)
    }

    fn update_tracks(&self, st: &mut ControllerState, readings: &Readings) {
        for d in &readings.detections {
            if let ObstacleRef::Car(id) = d.source {
                let h = st.tracks.entry(id).or_default();
                h.push(TrackSample {
                    step: st.step,
                    position: d.footprint.centre,
                });
                if h.len() > self.params.track_history {
                    h.remove(0);
                }
            }
        }
        let now = st.step;
        st.tracks
            .retain(|_, h| h.last().is_some_and(|s| now - s.step <= 10));
    }

    fn car_length(&self) -> f64 {
        self.map.car_length
    }

    /// Parked cars (seen or hypothesised) blocking the own lane ahead, as the
    /// lane-coordinate span of the first cluster. Cars closer together than
    /// a car length plus 2 m form one cluster.
    fn obstruction(
        &self,
        st: &ControllerState,
        readings: &Readings,
        from: f64,
    ) -> Option<(f64, f64)> {
        self.obstruction_on(st.lane, readings, from)
    }

    fn obstruction_on(&self, lane: LaneRef, readings: &Readings, from: f64) -> Option<(f64, f64)> {
        let len = self.map.road_length(lane.road);
        let h = self.map.road_width / 2.0;
        let surface = self.map.road_surface(lane.road);
        let mut spans: Vec<(f64, f64)> = readings
            .detections
            .iter()
            .filter(|d| matches!(d.source, ObstacleRef::Parked(_)))
            .map(|d| d.footprint)
            .chain(predict_hidden_extension(&readings.detections))
            .filter(|fp| {
                let lat = self.map.lane_lateral(lane, fp.centre);
                let s = self.map.lane_coordinate(lane, fp.centre);
                surface.contains(fp.centre) && lat < 0.0 && lat > -h && s > h && s < len - h
            })
            .map(|fp| {
                let cs = fp.corners().map(|c| self.map.lane_coordinate(lane, c));
                let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .filter(|(_, hi)| *hi > from)
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut it = spans.into_iter();
        let (start, mut end) = it.next()?;
        for (lo, hi) in it {
            if lo <= end + self.car_length() + 2.0 {
                end = end.max(hi);
            }
        }
        Some((start, end))
    }

    fn nominal_corridor(&self, st: &ControllerState, end: f64) -> OrientedRect {
        let lane = st.lane;
        let d = self.map.lane_direction(lane);
        let s = self.map.lane_coordinate(lane, st.pose.position);
        let (a, b) = (s - self.car_length(), end + self.params.clearance_extension);
        let origin = self.map.junction(self.map.lane_entry(lane)).position;
        let centre = origin + d * ((a + b) / 2.0) + d.left() * (self.map.road_width / 4.0);
        OrientedRect::new(centre, d.angle(), b - a, self.map.road_width / 2.0 + 0.5)
    }

    /// Car-wide ray along the current heading, as long as the nominal corridor.
    fn heading_corridor(&self, st: &ControllerState, end: f64) -> OrientedRect {
        let s = self.map.lane_coordinate(st.lane, st.pose.position);
        let length = end + self.params.clearance_extension - s + self.car_length();
        let hd = st.pose.direction();
        let centre = st.pose.position + hd * (length / 2.0 - self.car_length());
        OrientedRect::new(centre, st.pose.heading, length, self.map.car_width)
    }

    /// Whether the opposing lane is predicted free for the overtake. While
    /// overtaking, fault 18 swaps in the heading-aligned corridor.
    fn opposing_lane_clear(&self, st: &mut ControllerState, readings: &Readings, end: f64) -> bool {
        let corridor =
            if st.mode == Mode::Overtaking && st.triggers.is_on(FaultId::OVERTAKE_LOOKOUT) {
                st.triggers.hit(FaultId::OVERTAKE_LOOKOUT, 1);
                self.heading_corridor(st, end)
            } else {
                self.nominal_corridor(st, end)
            };
        let zone = corridor.inflated(1.0);
        for h in st.tracks.values() {
            let Some(last) = h.last() else { continue };
            if zone.contains(last.position) {
                return false;
            }
            if let Ok(pred) = predict_trajectory(h, self.params.clearance_horizon_steps) {
                if pred.iter().any(|p| zone.contains(*p)) {
                    return false;
                }
            }
        }
        !readings.detections.iter().any(|d| {
            matches!(d.source, ObstacleRef::Parked(_))
                && self.map.lane_lateral(st.lane, d.footprint.centre) > 0.0
                && d.footprint.intersects(&corridor)
        })
    }

    /// Distance along the heading to the first road edge straight ahead.
    fn visible_distance(&self, readings: &Readings) -> Option<f64> {
        readings
            .markings
            .iter()
            .filter(|h| h.kind == MarkingKind::Edge)
            .filter(|h| h.bearing.cos() > 0.0 && (h.range * h.bearing.sin()).abs() < 1.0)
            .map(|h| h.range * h.bearing.cos())
            .min_by(f64::total_cmp)
    }

    fn stop_speed(&self, distance: f64) -> f64 {
        (2.0 * self.params.plan_brake * distance.max(0.0)).sqrt()
    }

    fn ramp(&self, st: &ControllerState, desired: f64, dt: f64) -> f64 {
        let lo = st.speed - self.params.brake * dt;
        let hi = st.speed + self.params.accel * dt;
        desired.clamp(lo, hi).max(0.0)
    }

    /// Speed cap from traffic ahead within a narrow corridor on the heading.
    fn follow_limit(&self, st: &ControllerState) -> f64 {
        let hd = st.pose.direction();
        let mut limit = f64::INFINITY;
        for h in st.tracks.values() {
            let Some(last) = h.last() else { continue };
            if last.step != st.step {
                continue;
            }
            let rel = last.position - st.pose.position;
            let fwd = rel.dot(hd);
            if fwd > 0.0 && fwd < 30.0 && rel.dot(hd.left()).abs() < 2.0 {
                let gap = fwd - self.car_length() - self.params.follow_gap;
                limit = limit.min(self.stop_speed(gap));
            }
        }
        limit
    }

    fn target_ahead(&self, st: &ControllerState) -> Option<f64> {
        let t = self.map.target;
        if !self.map.road_surface(st.lane.road).contains(t) {
            return None;
        }
        let ts = self.map.lane_coordinate(st.lane, t);
        let s = self.map.lane_coordinate(st.lane, st.pose.position);
        (ts - s > -self.params.target_tolerance && ts - s <= self.params.target_approach_range)
            .then_some(ts)
    }

    /// The point beside the target, at lane coordinate `ts`, that keeps the
    /// vehicle centre on its own side of the centreline when the target can
    /// still be reached from there.
    fn target_aim(&self, lane: LaneRef, ts: f64) -> Point {
        let t = self.map.lane_lateral(lane, self.map.target);
        let reach = self.params.target_tolerance - 0.1;
        let lat = t.min((t - reach).max(-0.05));
        let d = self.map.lane_direction(lane);
        self.map.lane_point(lane, ts) + d.left() * (self.map.road_width / 4.0 + lat)
    }

    fn begin_uturn(&self, st: &mut ControllerState) {
        st.mode = Mode::UTurning;
        st.overtake = None;
        st.current_waypoint = None;
        st.blocked_steps = 0;
    }

    fn uturn(&self, st: &mut ControllerState, dt: f64) -> Actuation {
        Actuation {
            steer: self.params.uturn_rate,
            speed: self.ramp(st, self.params.uturn_speed, dt),
        }
    }

    /// One control decision. `state.pose`, `state.speed` and `state.step`
    /// must already describe the current step.
    pub fn control_step(
        &self,
        st: &mut ControllerState,
        readings: &Readings,
        dt: f64,
        rng: &mut SeededRng,
    ) -> Actuation {
        self.update_tracks(st, readings);
        let p = &self.params;

        if st.mode == Mode::UTurning {
            let back = self.map.lane_direction(st.lane.reversed());
            if st.pose.direction().dot(back) >= 0.2f64.cos() {
                st.mode = Mode::Driving;
                let lane = st.lane.reversed();
                self.enter_lane(st, lane, rng);
            } else {
                return self.uturn(st, dt);
            }
        }

        self.advance_route(st, rng);
        let lane = st.lane;
        let s = self.map.lane_coordinate(lane, st.pose.position);
        let road_len = self.map.road_length(lane.road);
        let half = self.car_length() / 2.0;
        let quarter = self.map.road_width / 4.0;

        if st.mode == Mode::Driving && st.next_lane.is_none() && s >= road_len - quarter {
            self.begin_uturn(st);
            return self.uturn(st, dt);
        }

        let mut desired = p.cruise_speed;
        let target_s = self.target_ahead(st);

        if st.mode == Mode::Driving {
            if let Some((start, end)) = self.obstruction(st, readings, s + half - 0.5) {
                if target_s.is_none_or(|t| t > start - 1.0) {
                    let gap = start - (s + half);
                    // The pass must finish before the junction box.
                    let room = end + p.overtake_return_margin + self.car_length()
                        <= road_len - self.map.road_width / 2.0;
                    // Only from a settled position in the own lane.
                    let settled = self.map.lane_lateral(lane, st.pose.position) < 0.0
                        && wrap_angle(st.pose.heading - self.map.lane_direction(lane).angle())
                            .abs()
                            < 0.3;
                    if gap <= p.overtake_decision_gap
                        && gap > p.overtake_min_gap
                        && room
                        && settled
                        && self.opposing_lane_clear(st, readings, end)
                    {
                        st.mode = Mode::Overtaking;
                        st.blocked_steps = 0;
                        st.overtake = Some(OvertakeContext {
                            lane,
                            start,
                            end,
                            entry_step: st.step,
                            entry_steer: None,
                            phase: OvertakePhase::PullOut,
                        });
                    } else {
                        desired = desired.min(self.stop_speed(gap - p.queue_gap));
                        if st.speed < 0.1 && desired < 0.5 {
                            st.blocked_steps += 1;
                            if st.blocked_steps > p.stuck_uturn_steps
                                && self.opposing_lane_clear(st, readings, s + half)
                            {
                                self.begin_uturn(st);
                                return self.uturn(st, dt);
                            }
                        } else {
                            st.blocked_steps = 0;
                        }
                    }
                }
            } else {
                st.blocked_steps = 0;
            }
        }

        let wp = if st.mode == Mode::Overtaking {
            let (wp, cap) = self.overtake_waypoint(st, readings, s);
            desired = desired.min(cap);
            wp
        } else if let Some(ts) = target_s {
            let d = st.pose.position.dist(self.map.target);
            desired = desired.min(0.8 + self.stop_speed(d - 1.5));
            let aim = self.target_aim(lane, ts);
            self.place_waypoint(st, aim)
        } else {
            self.next_waypoint(st)
        };

        // Route speed limits.
        if st.mode != Mode::Overtaking {
            match st.next_lane {
                Some(next) if self.is_turn(lane, next) => {
                    let (_, s1, _) = self.corner(lane, next);
                    let v2 =
                        p.turn_speed * p.turn_speed + 2.0 * p.plan_brake * (s1 - s - 3.0).max(0.0);
                    desired = desired.min(v2.sqrt());
                }
                None => {
                    let d = road_len - quarter - s;
                    desired = desired.min(
                        (p.uturn_speed * p.uturn_speed + 2.0 * p.plan_brake * d.max(0.0)).sqrt(),
                    );
                }
                _ => {}
            }
            let lane_heading = self.map.lane_direction(lane).angle();
            if wrap_angle(st.pose.heading - lane_heading).abs() > 0.3 {
                desired = desired.min(p.turn_speed);
            }
        }
        if let Some(d) = self.visible_distance(readings) {
            desired = desired.min(self.stop_speed(d - 3.0).max(p.min_visual_speed));
        }
        desired = desired.min(self.follow_limit(st));

        let mut steer = self.steer_towards(st, wp);
        if st.mode == Mode::Overtaking {
            let ctx = st.overtake.as_mut().expect("overtaking has a context");
            match ctx.entry_steer {
                None => ctx.entry_steer = Some(steer),
                Some(frozen) if st.triggers.is_on(FaultId::OVERTAKE_STEER) => {
                    steer = frozen;
                    st.triggers.hit(FaultId::OVERTAKE_STEER, 1);
                }
                Some(_) => {}
            }
        }
        Actuation {
            steer,
            speed: self.ramp(st, desired, dt),
        }
    }

    /// Waypoint and speed cap for the current overtake phase; may end the
    /// manoeuvre.
    fn overtake_waypoint(
        &self,
        st: &mut ControllerState,
        readings: &Readings,
        s: f64,
    ) -> (Point, f64) {
        let p = &self.params;
        let half = self.car_length() / 2.0;
        let lane = st.lane;
        let mut ctx = st.overtake.clone().expect("overtaking has a context");
        if let Some((start, end)) = self.obstruction(st, readings, s - half) {
            if start <= ctx.end + self.car_length() + 2.0 {
                ctx.end = ctx.end.max(end);
            }
        }
        if ctx.phase == OvertakePhase::PullOut {
            let clear = self.opposing_lane_clear(st, readings, ctx.end);
            if !clear && s + half < ctx.start - 0.5 {
                ctx.phase = OvertakePhase::Abort;
            } else if s - half > ctx.end + p.overtake_return_margin {
                ctx.phase = OvertakePhase::Return;
            }
        }
        let lat = self.map.lane_lateral(lane, st.pose.position);
        let aligned =
            wrap_angle(st.pose.heading - self.map.lane_direction(lane).angle()).abs() < 0.15;
        let back_in_lane = lat < -(self.map.road_width / 4.0 - 0.5) && aligned;
        let timed_out = st.step - ctx.entry_step >= p.overtake_timeout_steps;
        if timed_out || (ctx.phase != OvertakePhase::PullOut && back_in_lane) {
            st.mode = Mode::Driving;
            st.overtake = None;
            return (self.next_waypoint(st), p.cruise_speed);
        }
        let d = self.map.lane_direction(lane);
        let (nominal, cap) = match ctx.phase {
            OvertakePhase::PullOut => {
                let wp = self.map.lane_point(lane, s + p.overtake_lookahead)
                    + d.left() * (self.map.road_width / 2.0);
                (wp, p.overtake_speed)
            }
            OvertakePhase::Return => (
                self.map.lane_point(lane, s + p.overtake_lookahead),
                p.overtake_speed,
            ),
            OvertakePhase::Abort => {
                // Creep back into the lane, stopping short of the overtake
                // start distance so that a later attempt stays possible.
                let gap = ctx.start - (s + half);
                let cap = if gap > p.overtake_min_gap + 0.5 {
                    1.0
                } else {
                    0.0
                };
                (self.map.lane_point(lane, s + 2.0), cap)
            }
        };
        st.overtake = Some(ctx);
        (self.place_waypoint(st, nominal), cap)
    }
}

/// The lane the pose is driving in: a road whose surface contains it,
/// preferring the one aligned with the heading, in the heading's direction.
pub(crate) fn locate_lane(map: &WorldMap, pose: &Pose) -> LaneRef {
    let hd = pose.direction();
    let mut best: Option<(f64, LaneRef)> = None;
    for r in &map.roads {
        let surface = map.road_surface(r.id);
        let miss = surface.distance_to_point(pose.position);
        let along = hd.dot(r.axis.unit());
        let dir = if along >= 0.0 {
            LaneDir::Forward
        } else {
            LaneDir::Backward
        };
        // Containment first, then alignment.
        let score = miss * 10.0 - along.abs();
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, LaneRef::new(r.id, dir)));
        }
    }
    best.expect("map has roads").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::world::{fixtures, LaneDir};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn state_on(map: &WorldMap, faults: FaultSet) -> (Controller<'_>, ControllerState) {
        let c = Controller::new(map, ControllerParams::default());
        let mut rng = SeededRng::new(1);
        let st = c.initial_state(faults, &mut rng);
        (c, st)
    }

    #[test]
    fn eastbound_waypoint_is_8m_ahead_in_right_lane() {
        let map = fixtures::straight();
        let (c, mut st) = state_on(&map, FaultSet::nominal());
        let wp = c.next_waypoint(&mut st);
        let lane = LaneRef::new(RoadId(0), LaneDir::Forward);
        let s = map.lane_coordinate(lane, map.ar_start.position);
        let expect = map.lane_point(lane, s + 8.0);
        assert!(close(wp.x, expect.x) && close(wp.y, expect.y));
        assert!(close(wp.y, 250.0 - 1.5));
        assert_eq!(st.triggers.total(), 0);
    }

    #[test]
    fn waypoint_faults_offset_by_half_metre() {
        let map = fixtures::straight();
        let (c, mut nominal) = state_on(&map, FaultSet::nominal());
        let base = c.next_waypoint(&mut nominal);
        let (c2, mut ne) = state_on(&map, FaultSet::single(FaultId::WAYPOINT_NE));
        let wp = c2.next_waypoint(&mut ne);
        assert!(close(wp.x - base.x, 0.5) && close(wp.y - base.y, 0.5));
        assert_eq!(ne.triggers.count(FaultId::WAYPOINT_NE), 1);
        let (c3, mut se) = state_on(&map, FaultSet::single(FaultId::WAYPOINT_SE));
        let wp = c3.next_waypoint(&mut se);
        assert!(close(wp.x - base.x, 0.5) && close(wp.y - base.y, -0.5));
        assert_eq!(se.triggers.count(FaultId::WAYPOINT_SE), 1);
    }

    #[test]
    fn steering_is_proportional_and_clamped() {
        let map = fixtures::straight();
        let (c, st) = state_on(&map, FaultSet::nominal());
        let ahead = st.pose.position + st.pose.direction() * 10.0;
        assert_eq!(c.steer_towards(&st, ahead), 0.0);
        let left30 =
            st.pose.position + Point::from_heading(st.pose.heading + 30f64.to_radians()) * 10.0;
        let s = c.steer_towards(&st, left30);
        assert!(s > 0.0);
        assert!(close(s, (2.0 * 30f64.to_radians()).min(1.2)));
        let left10 =
            st.pose.position + Point::from_heading(st.pose.heading + 10f64.to_radians()) * 10.0;
        assert!(close(
            c.steer_towards(&st, left10),
            2.0 * 10f64.to_radians()
        ));
    }

    #[test]
    fn dead_end_forces_uturn() {
        let map = fixtures::straight();
        let c = Controller::new(&map, ControllerParams::default());
        let mut rng = SeededRng::new(0);
        let j = map.road(RoadId(0)).endpoints.1;
        assert_eq!(
            c.choose_road_at_junction(&BTreeSet::new(), j, RoadId(0), &mut rng),
            JunctionChoice::UTurn(RoadId(0))
        );
    }

    #[test]
    fn single_unvisited_arm_always_chosen() {
        let map = fixtures::tee();
        let c = Controller::new(&map, ControllerParams::default());
        let centre = JunctionId(0);
        let inc = map.incident_roads(centre);
        let (arrival, rest) = (inc[0], &inc[1..]);
        let visited = BTreeSet::from([arrival, rest[0]]);
        let mut rng = SeededRng::new(3);
        for _ in 0..200 {
            assert_eq!(
                c.choose_road_at_junction(&visited, centre, arrival, &mut rng),
                JunctionChoice::Road(rest[1])
            );
        }
    }

    #[test]
    fn unvisited_arms_weighted_by_inverse_distance() {
        // T junction at the origin of a fixture: arms of 50 m (north) and
        // 150 m (east); the target sits at the centre junction, so far-end
        // distances are the arm lengths.
        let mut map = fixtures::base(
            vec![
                Point::new(200.0, 200.0),
                Point::new(100.0, 200.0),
                Point::new(350.0, 200.0),
                Point::new(200.0, 250.0),
            ],
            vec![(1, 0), (0, 2), (0, 3)],
        );
        map.target = Point::new(200.0, 200.0);
        let c = Controller::new(&map, ControllerParams::default());
        let j = JunctionId(0);
        let arrival = map
            .incident_roads(j)
            .into_iter()
            .find(|r| map.other_end(*r, j) == JunctionId(1))
            .unwrap();
        let north = map
            .incident_roads(j)
            .into_iter()
            .find(|r| map.other_end(*r, j) == JunctionId(3))
            .unwrap();
        let mut rng = SeededRng::new(11);
        let n = 10_000;
        let mut north_count = 0;
        for _ in 0..n {
            if c.choose_road_at_junction(&BTreeSet::new(), j, arrival, &mut rng)
                == JunctionChoice::Road(north)
            {
                north_count += 1;
            }
        }
        let (w50, w150) = (1.0 / 51.0, 1.0 / 151.0);
        let expect = w50 / (w50 + w150);
        assert!((north_count as f64 / n as f64 - expect).abs() < 0.02);
    }

    #[test]
    fn lane_located_from_heading() {
        let map = fixtures::straight();
        let lane = locate_lane(&map, &map.ar_start);
        assert_eq!(lane, LaneRef::new(RoadId(0), LaneDir::Forward));
        let back = Pose::new(Point::new(150.0, 251.5), std::f64::consts::PI);
        assert_eq!(
            locate_lane(&map, &back),
            LaneRef::new(RoadId(0), LaneDir::Backward)
        );
    }
}
