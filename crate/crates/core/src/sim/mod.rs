//! Discrete-time simulation of one run: the vehicle under test, moving
//! traffic and the accident monitors.

mod export;
mod log;

pub use export::{scene_svg, trajectory_csv};
pub use log::{LogError, RunLog};

use crate::geom::{OrientedRect, Point, Pose};
use crate::mapgen::{generate_map, GenConfig, GenError};
use crate::rng::{SeededRng, StreamTag};
use crate::sut::{Controller, ControllerParams, FaultId, FaultSet, Mode, ObstacleRef};
use crate::traffic::{Traffic, TrafficParams};
use crate::world::{ObstacleId, WorldMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Steps before the same (kind, counterpart) accident may be raised again.
pub const ACCIDENT_COOLDOWN: u64 = 50;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Generation(#[from] GenError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub internal_seed: u64,
    pub dt: f64,
    pub max_steps: u64,
    pub fault_set: FaultSet,
    pub controller: ControllerParams,
    pub traffic: TrafficParams,
    pub record_trajectory: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            internal_seed: 0,
            dt: 0.1,
            max_steps: 20_000,
            fault_set: FaultSet::nominal(),
            controller: ControllerParams::default(),
            traffic: TrafficParams::default(),
            record_trajectory: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.max_steps < 1 {
            return Err(SimError::InvalidConfig(
                "max_steps must be at least 1".into(),
            ));
        }
        self.controller
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex. Trajectory
    /// recording does not change a run, so it is left out.
    pub fn digest(&self) -> String {
        let c = RunConfig {
            record_trajectory: false,
            ..self.clone()
        };
        sha256_hex(
            serde_json::to_string(&c)
                .expect("config serialises")
                .as_bytes(),
        )
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccidentKind {
    #[serde(rename = "CLASHWITHOBSTACLE")]
    ClashWithObstacle,
    #[serde(rename = "CLASHWITHOTHERCAR")]
    ClashWithOtherCar,
    #[serde(rename = "LEAVEROAD")]
    LeaveRoad,
    #[serde(rename = "CROSSCENTRELINE")]
    CrossCentreline,
}

impl AccidentKind {
    pub const ALL: [AccidentKind; 4] = [
        AccidentKind::ClashWithObstacle,
        AccidentKind::ClashWithOtherCar,
        AccidentKind::LeaveRoad,
        AccidentKind::CrossCentreline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AccidentKind::ClashWithObstacle => "CLASHWITHOBSTACLE",
            AccidentKind::ClashWithOtherCar => "CLASHWITHOTHERCAR",
            AccidentKind::LeaveRoad => "LEAVEROAD",
            AccidentKind::CrossCentreline => "CROSSCENTRELINE",
        }
    }
}

impl fmt::Display for AccidentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AccidentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown accident kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Counterpart {
    Obstacle(ObstacleId),
    Car(u32),
}

impl fmt::Display for Counterpart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Counterpart::Obstacle(id) => write!(f, "obstacle:{}", id.0),
            Counterpart::Car(id) => write!(f, "car:{id}"),
        }
    }
}

impl FromStr for Counterpart {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, id) = s
            .split_once(':')
            .ok_or_else(|| format!("bad counterpart {s:?}"))?;
        let id: u32 = id
            .parse()
            .map_err(|_| format!("bad counterpart id in {s:?}"))?;
        match kind {
            "obstacle" => Ok(Counterpart::Obstacle(ObstacleId(id))),
            "car" => Ok(Counterpart::Car(id)),
            _ => Err(format!("bad counterpart {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccidentEvent {
    pub kind: AccidentKind,
    pub step: u64,
    /// Vehicle centre when the event was raised.
    pub position: Point,
    pub counterpart: Option<Counterpart>,
}

/// Everything the monitors look at for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub pose: Pose,
    pub mode: Mode,
    pub justified: bool,
    /// Moving cars as (id, pose).
    pub cars: Vec<(u32, Pose)>,
}

/// Accident conditions holding at one instant, before deduplication.
pub fn raw_accidents(
    map: &WorldMap,
    pose: &Pose,
    cars: &[(u32, Pose)],
    justified: bool,
) -> Vec<(AccidentKind, Option<Counterpart>)> {
    let mut out = Vec::new();
    let fp = map.car_footprint(pose);
    for p in &map.parked {
        if fp.intersects(&p.footprint) {
            out.push((
                AccidentKind::ClashWithObstacle,
                Some(Counterpart::Obstacle(p.id)),
            ));
        }
    }
    for (id, cp) in cars {
        if fp.intersects(&map.car_footprint(cp)) {
            out.push((AccidentKind::ClashWithOtherCar, Some(Counterpart::Car(*id))));
        }
    }
    if !crate::world::on_road(map, pose.position) {
        out.push((AccidentKind::LeaveRoad, None));
    } else if !justified && in_opposing_lane(map, pose) {
        out.push((AccidentKind::CrossCentreline, None));
    }
    out
}

/// Centre off the junction boxes, on the half of a road whose traffic runs
/// against the vehicle's heading.
pub fn in_opposing_lane(map: &WorldMap, pose: &Pose) -> bool {
    let p = pose.position;
    if map
        .junctions
        .iter()
        .any(|j| map.junction_box(j.id).contains(p))
    {
        return false;
    }
    let hd = pose.direction();
    map.roads
        .iter()
        .filter(|r| map.road_surface(r.id).contains(p))
        .any(|r| {
            [
                crate::world::LaneDir::Forward,
                crate::world::LaneDir::Backward,
            ]
            .into_iter()
            .any(|dir| {
                let lane = crate::world::LaneRef::new(r.id, dir);
                map.lane_lateral(lane, p) < 0.0 && hd.dot(map.lane_direction(lane)) < 0.0
            })
        })
}

/// Per-(kind, counterpart) cooldown filter.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    last: BTreeMap<(AccidentKind, Option<Counterpart>), u64>,
}

impl Monitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, map: &WorldMap, record: &TrajectoryRecord) -> Vec<AccidentEvent> {
        let mut out = Vec::new();
        for (kind, counterpart) in raw_accidents(map, &record.pose, &record.cars, record.justified)
        {
            let key = (kind, counterpart);
            if self
                .last
                .get(&key)
                .is_some_and(|&s| record.step - s < ACCIDENT_COOLDOWN)
            {
                continue;
            }
            self.last.insert(key, record.step);
            out.push(AccidentEvent {
                kind,
                step: record.step,
                position: record.pose.position,
                counterpart,
            });
        }
        out
    }
}

/// Re-runs the monitors over a stored trajectory.
pub fn detect_over_trajectory(
    map: &WorldMap,
    trajectory: &[TrajectoryRecord],
) -> Vec<AccidentEvent> {
    let mut m = Monitor::new();
    trajectory
        .iter()
        .skip(1)
        .flat_map(|r| m.observe(map, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    TargetReached,
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::TargetReached => "TargetReached",
            Outcome::Timeout => "Timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRef {
    pub external_seed: u64,
    /// SHA-256 of the serialised map.
    pub digest: String,
}

impl MapRef {
    pub fn of(map: &WorldMap) -> Self {
        Self {
            external_seed: map.external_seed,
            digest: sha256_hex(map.to_json().as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub map_ref: MapRef,
    pub config: RunConfig,
    pub events: Vec<AccidentEvent>,
    pub trigger_counts: BTreeMap<FaultId, u64>,
    pub outcome: Outcome,
    pub steps_executed: u64,
    /// One record per step including step 0.
    pub trajectory: Option<Vec<TrajectoryRecord>>,
}

impl RunResult {
    pub fn triggered(&self, f: FaultId) -> bool {
        self.trigger_counts.get(&f).is_some_and(|&n| n > 0)
    }

    pub fn log(&self) -> RunLog {
        RunLog::from_result(self)
    }
}

fn obstacles(map: &WorldMap, traffic: &Traffic) -> Vec<(ObstacleRef, OrientedRect)> {
    map.parked
        .iter()
        .map(|p| (ObstacleRef::Parked(p.id), p.footprint))
        .chain(
            traffic
                .cars()
                .iter()
                .map(|c| (ObstacleRef::Car(c.id), c.footprint(map))),
        )
        .collect()
}

/// Simulates one run. Navigation and traffic draw from separate streams of
/// the internal seed so that neither perturbs the other.
pub fn run(map: &WorldMap, config: &RunConfig) -> RunResult {
    let ctrl = Controller::new(map, config.controller.clone());
    let mut nav = SeededRng::substream(config.internal_seed, StreamTag::Navigation, 0);
    let mut trng = SeededRng::substream(config.internal_seed, StreamTag::Traffic, 0);
    let mut st = ctrl.initial_state(config.fault_set.clone(), &mut nav);
    let mut traffic = Traffic::new(map, config.traffic.clone());
    let mut monitor = Monitor::new();
    let mut events = Vec::new();
    let mut trajectory = Vec::new();
    let tolerance = config.controller.target_tolerance;
    let max_steer = config.controller.max_steer;

    let record =
        |step: u64, st: &crate::sut::ControllerState, traffic: &Traffic| TrajectoryRecord {
            step,
            pose: st.pose,
            mode: st.mode,
            justified: st.justified(),
            cars: traffic.cars().iter().map(|c| (c.id, c.pose)).collect(),
        };
    if config.record_trajectory {
        trajectory.push(record(0, &st, &traffic));
    }

    let mut step = 0;
    let outcome = loop {
        if st.pose.position.dist(map.target) <= tolerance {
            break Outcome::TargetReached;
        }
        if step >= config.max_steps {
            break Outcome::Timeout;
        }
        st.step = step;
        let readings = ctrl.sense(&mut st, &obstacles(map, &traffic));
        let act = ctrl.control_step(&mut st, &readings, config.dt, &mut nav);
        let steer = act.steer.clamp(-max_steer, max_steer);
        let heading = crate::geom::normalize_heading(st.pose.heading + steer * config.dt);
        let position = st.pose.position + Point::from_heading(heading) * (act.speed * config.dt);
        st.pose = Pose::new(position, heading);
        st.speed = act.speed;
        let ar = map.car_footprint(&st.pose);
        traffic.step(map, &mut trng, config.dt, &ar);
        step += 1;
        st.step = step;
        let rec = record(step, &st, &traffic);
        events.extend(monitor.observe(map, &rec));
        if config.record_trajectory {
            trajectory.push(rec);
        }
    };

    RunResult {
        map_ref: MapRef::of(map),
        config: config.clone(),
        events,
        trigger_counts: st.triggers.counts().clone(),
        outcome,
        steps_executed: step,
        trajectory: config.record_trajectory.then_some(trajectory),
    }
}

/// Regenerates the map from its seed and runs it.
pub fn replay(
    external_seed: u64,
    config: &RunConfig,
    gen_config: &GenConfig,
) -> Result<RunResult, SimError> {
    config.validate()?;
    let map = generate_map(external_seed, gen_config)?;
    Ok(run(&map, config))
}

#[cfg(test)]
mod tests;
