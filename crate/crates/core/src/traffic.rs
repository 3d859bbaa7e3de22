//! Moving obstacle cars.
//!
//! Cars follow lane centrelines, cutting junctions at the point where the
//! two lane lines cross. Each tick cars are stepped in id order; a car's
//! only random draw is its exit choice when it reaches a junction box (one
//! `below` draw, or none when the choice is forced). Replacement cars are
//! then spawned, one `below` draw each. Cars never overlap each other and
//! take no notice of the vehicle under test.

use crate::geom::{OrientedRect, Pose};
use crate::rng::SeededRng;
use crate::world::{LaneRef, WorldMap};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    pub speed: f64,
    /// Steps a car may stand still before it leaves the network.
    pub stuck_limit: u32,
    /// Minimum spacing kept to other cars.
    pub gap: f64,
    /// Free space required around a spawn position.
    pub spawn_clearance: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            speed: 8.0,
            stuck_limit: 300,
            gap: 0.5,
            spawn_clearance: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrafficError {
    #[error("no unoccupied dead end to spawn a car at")]
    NoFreeDeadEnd,
}

/// What a car does at the end of its lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exit {
    Undecided,
    Lane(LaneRef),
    /// Dead end, or every onward lane is blocked.
    Leave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingCar {
    pub id: u32,
    pub lane: LaneRef,
    /// Distance along `lane` from its entry junction.
    pub s: f64,
    pub pose: Pose,
    pub speed: f64,
    pub exit: Exit,
    pub stuck_steps: u32,
}

impl MovingCar {
    pub fn new(map: &WorldMap, id: u32, lane: LaneRef, s: f64) -> Self {
        Self {
            id,
            lane,
            s,
            pose: map.lane_pose(lane, s),
            speed: 0.0,
            exit: Exit::Undecided,
            stuck_steps: 0,
        }
    }

    pub fn footprint(&self, map: &WorldMap) -> OrientedRect {
        map.car_footprint(&self.pose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CarStep {
    Moved(MovingCar),
    Departed,
}

/// Lanes that contain a parked car; traffic never enters them.
pub fn blocked_lanes(map: &WorldMap) -> BTreeSet<LaneRef> {
    map.parked.iter().map(|p| p.lane).collect()
}

/// Lane coordinates, on `from` and on `to`, of the point where the two lane
/// centrelines cross (the junction-centre point for straight continuations).
pub fn lane_switch_point(map: &WorldMap, from: LaneRef, to: LaneRef) -> (f64, f64) {
    let d1 = map.lane_direction(from);
    let d2 = map.lane_direction(to);
    if d1.dot(d2) > 0.5 {
        return (map.road_length(from.road), 0.0);
    }
    let p1 = map.lane_point(from, 0.0);
    let p2 = map.lane_point(to, 0.0);
    let c = if d1.x.abs() > 0.5 {
        crate::geom::Point::new(p2.x, p1.y)
    } else {
        crate::geom::Point::new(p1.x, p2.y)
    };
    (map.lane_coordinate(from, c), map.lane_coordinate(to, c))
}

fn choose_exit(
    map: &WorldMap,
    lane: LaneRef,
    blocked: &BTreeSet<LaneRef>,
    rng: &mut SeededRng,
) -> Exit {
    let j = map.lane_exit(lane);
    let options: Vec<LaneRef> = map
        .incident_roads(j)
        .into_iter()
        .filter(|r| *r != lane.road)
        .map(|r| map.lane_leaving(r, j))
        .filter(|l| !blocked.contains(l))
        .collect();
    match options.len() {
        0 => Exit::Leave,
        1 => Exit::Lane(options[0]),
        n => Exit::Lane(options[rng.below(n as u64) as usize]),
    }
}

/// Position after travelling `dist` from `(lane, s)`; `None` once the car
/// has left the network.
fn advance(
    map: &WorldMap,
    lane: LaneRef,
    s: f64,
    exit: Exit,
    dist: f64,
) -> Option<(LaneRef, f64, Exit)> {
    let to = s + dist;
    match exit {
        Exit::Lane(next) => {
            let (s1, s2) = lane_switch_point(map, lane, next);
            if to >= s1 {
                Some((next, s2 + (to - s1), Exit::Undecided))
            } else {
                Some((lane, to, exit))
            }
        }
        Exit::Leave if to >= map.road_length(lane.road) => None,
        _ => Some((lane, to, exit)),
    }
}

/// Advances one car by one tick. `others` are the footprints of every other
/// car; the car moves at full speed, else half speed, else not at all,
/// whichever keeps it clear of them.
pub fn traffic_step(
    car: &MovingCar,
    map: &WorldMap,
    blocked: &BTreeSet<LaneRef>,
    others: &[OrientedRect],
    rng: &mut SeededRng,
    dt: f64,
    params: &TrafficParams,
) -> CarStep {
    let mut car = car.clone();
    let full = params.speed * dt;
    if car.exit == Exit::Undecided
        && car.s + full >= map.road_length(car.lane.road) - map.road_width / 2.0
    {
        car.exit = choose_exit(map, car.lane, blocked, rng);
    }
    for dist in [full, full / 2.0] {
        let Some((lane, s, exit)) = advance(map, car.lane, car.s, car.exit, dist) else {
            return CarStep::Departed;
        };
        let pose = map.lane_pose(lane, s);
        let fp = map.car_footprint(&pose).inflated(params.gap / 2.0);
        if others
            .iter()
            .all(|o| !o.inflated(params.gap / 2.0).intersects(&fp))
        {
            car.lane = lane;
            car.s = s;
            car.exit = exit;
            car.pose = pose;
            car.speed = dist / dt;
            car.stuck_steps = 0;
            return CarStep::Moved(car);
        }
    }
    car.speed = 0.0;
    car.stuck_steps += 1;
    if car.stuck_steps >= params.stuck_limit {
        return CarStep::Departed;
    }
    CarStep::Moved(car)
}

/// Spawns car `id` heading into the network from a uniformly chosen free
/// dead end.
pub fn respawn(
    map: &WorldMap,
    rng: &mut SeededRng,
    occupied: &[OrientedRect],
    blocked: &BTreeSet<LaneRef>,
    id: u32,
    params: &TrafficParams,
) -> Result<MovingCar, TrafficError> {
    let s = map.road_width / 2.0 + map.car_length / 2.0 + 0.5;
    let free: Vec<LaneRef> = map
        .dead_ends()
        .into_iter()
        .filter_map(|j| {
            let road = *map.incident_roads(j).first()?;
            let lane = map.lane_leaving(road, j);
            if blocked.contains(&lane) {
                return None;
            }
            let fp = map
                .car_footprint(&map.lane_pose(lane, s))
                .inflated(params.spawn_clearance);
            occupied.iter().all(|o| !o.intersects(&fp)).then_some(lane)
        })
        .collect();
    if free.is_empty() {
        return Err(TrafficError::NoFreeDeadEnd);
    }
    let lane = free[rng.below(free.len() as u64) as usize];
    Ok(MovingCar::new(map, id, lane, s))
}

/// All moving cars of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Traffic {
    cars: Vec<MovingCar>,
    target_count: usize,
    next_id: u32,
    blocked: BTreeSet<LaneRef>,
    params: TrafficParams,
}

impl Traffic {
    pub fn new(map: &WorldMap, params: TrafficParams) -> Self {
        let mut cars: Vec<MovingCar> = map
            .moving_cars
            .iter()
            .map(|c| MovingCar::new(map, c.id, c.lane, c.offset))
            .collect();
        cars.sort_by_key(|c| c.id);
        let next_id = cars.iter().map(|c| c.id + 1).max().unwrap_or(0);
        Self {
            target_count: map.moving_car_count as usize,
            cars,
            next_id,
            blocked: blocked_lanes(map),
            params,
        }
    }

    pub fn cars(&self) -> &[MovingCar] {
        &self.cars
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    /// One tick: move every car, then refill departures. `ar` counts as
    /// occupied space for spawning.
    pub fn step(&mut self, map: &WorldMap, rng: &mut SeededRng, dt: f64, ar: &OrientedRect) {
        let mut i = 0;
        while i < self.cars.len() {
            let others: Vec<OrientedRect> = self
                .cars
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, c)| c.footprint(map))
                .collect();
            match traffic_step(
                &self.cars[i],
                map,
                &self.blocked,
                &others,
                rng,
                dt,
                &self.params,
            ) {
                CarStep::Moved(c) => {
                    self.cars[i] = c;
                    i += 1;
                }
                CarStep::Departed => {
                    self.cars.remove(i);
                }
            }
        }
        while self.cars.len() < self.target_count {
            let mut occupied: Vec<OrientedRect> =
                self.cars.iter().map(|c| c.footprint(map)).collect();
            occupied.push(*ar);
            match respawn(
                map,
                rng,
                &occupied,
                &self.blocked,
                self.next_id,
                &self.params,
            ) {
                Ok(car) => {
                    self.next_id += 1;
                    self.cars.push(car);
                }
                Err(TrafficError::NoFreeDeadEnd) => break,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::mapgen::{generate_map, GenConfig};
    use crate::world::{fixtures, JunctionId, LaneDir, RoadId};

    fn params() -> TrafficParams {
        TrafficParams::default()
    }

    #[test]
    fn mid_road_car_advances_along_lane() {
        let map = fixtures::straight();
        let lane = LaneRef::new(RoadId(0), LaneDir::Forward);
        let car = MovingCar::new(&map, 0, lane, 50.0);
        let mut rng = SeededRng::new(0);
        let CarStep::Moved(c) =
            traffic_step(&car, &map, &BTreeSet::new(), &[], &mut rng, 0.1, &params())
        else {
            panic!("departed");
        };
        assert_eq!(c.lane, lane);
        assert!((c.s - 50.8).abs() < 1e-12);
        assert!((c.pose.position.x - car.pose.position.x - 0.8).abs() < 1e-9);
        assert_eq!(rng.draws(), 0);
    }

    #[test]
    fn dead_end_departs() {
        let map = fixtures::straight();
        let lane = LaneRef::new(RoadId(0), LaneDir::Forward);
        let mut car = MovingCar::new(&map, 0, lane, 190.0);
        let mut rng = SeededRng::new(0);
        for _ in 0..200 {
            match traffic_step(&car, &map, &BTreeSet::new(), &[], &mut rng, 0.1, &params()) {
                CarStep::Moved(c) => car = c,
                CarStep::Departed => return,
            }
        }
        panic!("car never left");
    }

    #[test]
    fn t_junction_turns_are_uniform() {
        let map = fixtures::tee();
        // West arm, heading east into the T.
        let west = map.incident_roads(JunctionId(0))[0];
        let lane = map.lane_leaving(west, JunctionId(1));
        let len = map.road_length(west);
        let car = MovingCar::new(&map, 0, lane, len - 3.5);
        let mut rng = SeededRng::new(21);
        let n = 10_000;
        let mut north = 0;
        for _ in 0..n {
            let CarStep::Moved(c) =
                traffic_step(&car, &map, &BTreeSet::new(), &[], &mut rng, 0.1, &params())
            else {
                panic!()
            };
            let Exit::Lane(l) = c.exit else {
                panic!("{:?}", c.exit)
            };
            assert_ne!(l.road, west);
            if map.lane_direction(l).y > 0.5 {
                north += 1;
            }
        }
        assert!((north as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn blocked_exit_is_never_taken() {
        let map = fixtures::tee();
        let west = map.incident_roads(JunctionId(0))[0];
        let lane = map.lane_leaving(west, JunctionId(1));
        let north = map.incident_roads(JunctionId(0))[2];
        let blocked = BTreeSet::from([map.lane_leaving(north, JunctionId(0))]);
        let car = MovingCar::new(&map, 0, lane, map.road_length(west) - 3.5);
        let mut rng = SeededRng::new(2);
        for _ in 0..100 {
            let CarStep::Moved(c) =
                traffic_step(&car, &map, &blocked, &[], &mut rng, 0.1, &params())
            else {
                panic!()
            };
            assert!(matches!(c.exit, Exit::Lane(l) if !blocked.contains(&l)));
        }
    }

    #[test]
    fn single_dead_end_spawn_points_inward() {
        let map = fixtures::l_shape();
        // Both ends of the L are dead ends; block one with an occupied box.
        let mut rng = SeededRng::new(0);
        let car = respawn(&map, &mut rng, &[], &BTreeSet::new(), 7, &params()).unwrap();
        assert_eq!(car.id, 7);
        let start = map.junction(map.lane_entry(car.lane)).position;
        assert_eq!(map.junction(map.lane_entry(car.lane)).degree, 1);
        assert!(car.pose.position.dist(start) < 10.0);
    }

    #[test]
    fn two_dead_ends_spawn_uniformly() {
        let map = fixtures::straight();
        let mut rng = SeededRng::new(5);
        let n = 10_000;
        let mut fwd = 0;
        for _ in 0..n {
            let c = respawn(&map, &mut rng, &[], &BTreeSet::new(), 0, &params()).unwrap();
            if c.lane.dir == LaneDir::Forward {
                fwd += 1;
            }
        }
        assert!((fwd as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn occupied_dead_end_defers_then_recovers() {
        // One dead end: the west end of a road that ends in a T elsewhere
        // would still have others, so use the straight road and block one
        // end by its lane.
        let map = fixtures::straight();
        let west_in = LaneRef::new(RoadId(0), LaneDir::Forward);
        let blocked = BTreeSet::from([west_in.reversed()]);
        let blocker = map.car_footprint(&map.lane_pose(west_in, 6.5));
        let mut rng = SeededRng::new(0);
        assert_eq!(
            respawn(&map, &mut rng, &[blocker], &blocked, 0, &params()),
            Err(TrafficError::NoFreeDeadEnd)
        );
        let c = respawn(&map, &mut rng, &[], &blocked, 0, &params()).unwrap();
        assert_eq!(c.lane, west_in);
    }

    #[test]
    fn population_restored_after_departure() {
        let mut map = fixtures::straight();
        let lane = LaneRef::new(RoadId(0), LaneDir::Forward);
        map.moving_cars.push(crate::world::MovingCarStart {
            id: 0,
            lane,
            offset: 195.0,
        });
        map.moving_car_count = 1;
        let mut t = Traffic::new(&map, params());
        let mut rng = SeededRng::new(1);
        let far = map.car_footprint(&Pose::new(Point::new(200.0, 0.0), 0.0));
        let mut saw_new = false;
        for _ in 0..50 {
            t.step(&map, &mut rng, 0.1, &far);
            assert_eq!(t.cars().len(), 1);
            saw_new |= t.cars()[0].id != 0;
        }
        assert!(saw_new);
    }

    #[test]
    fn cars_never_overlap_on_generated_maps() {
        let cfg = GenConfig {
            moving_range: [4, 4],
            ..GenConfig::default()
        };
        for seed in 0..15 {
            let map = generate_map(seed, &cfg).unwrap();
            let mut t = Traffic::new(&map, params());
            let mut rng = SeededRng::new(seed);
            let away = map.car_footprint(&Pose::new(Point::new(-100.0, -100.0), 0.0));
            for step in 0..3000 {
                t.step(&map, &mut rng, 0.1, &away);
                let fps: Vec<OrientedRect> = t.cars().iter().map(|c| c.footprint(&map)).collect();
                for a in 0..fps.len() {
                    for b in (a + 1)..fps.len() {
                        assert!(!fps[a].intersects(&fps[b]), "seed {seed} step {step}");
                    }
                }
                for c in t.cars() {
                    assert!(
                        crate::world::on_road(&map, c.pose.position),
                        "seed {seed} step {step}"
                    );
                }
            }
        }
    }
}
