//! Hand-built maps for tests and demonstrations.

use crate::geom::{Point, Pose, Rect};
use crate::world::*;

/// Road network from junction positions and `(a, b)` junction-index pairs.
/// The vehicle starts 10 m along road 0's forward lane, the target is 30 m
/// along it.
pub fn base(junctions: Vec<Point>, roads: Vec<(u32, u32)>) -> WorldMap {
    let width = 6.0;
    let mut js: Vec<Junction> = junctions
        .into_iter()
        .enumerate()
        .map(|(i, p)| Junction {
            id: JunctionId(i as u32),
            position: p,
            degree: 0,
        })
        .collect();
    let rs: Vec<RoadSegment> = roads
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let (pa, pb) = (js[a as usize].position, js[b as usize].position);
            let axis = if pa.y == pb.y {
                Axis::EastWest
            } else {
                Axis::NorthSouth
            };
            let swap = match axis {
                Axis::EastWest => pa.x > pb.x,
                Axis::NorthSouth => pa.y > pb.y,
            };
            let endpoints = if swap {
                (JunctionId(b), JunctionId(a))
            } else {
                (JunctionId(a), JunctionId(b))
            };
            RoadSegment {
                id: RoadId(i as u32),
                endpoints,
                axis,
                width,
            }
        })
        .collect();
    for r in &rs {
        js[r.endpoints.0.index()].degree += 1;
        js[r.endpoints.1.index()].degree += 1;
    }
    let start = js[rs[0].endpoints.0.index()].position;
    let mut m = WorldMap {
        bounds: Rect::new(Point::new(0.0, 0.0), Point::new(500.0, 500.0)),
        road_width: width,
        min_junction_separation: 40.0,
        car_length: 4.0,
        car_width: 2.0,
        junctions: js,
        roads: rs,
        parked: vec![],
        moving_cars: vec![],
        target: start,
        ar_start: Pose::new(start, 0.0),
        moving_car_count: 0,
        external_seed: 0,
    };
    let lane = LaneRef::new(RoadId(0), LaneDir::Forward);
    m.ar_start = m.lane_pose(lane, 10.0);
    m.target = m.lane_point(lane, 30.0);
    m
}

/// Straight east-west road from (100,250) to (300,250).
pub fn straight() -> WorldMap {
    base(
        vec![Point::new(100.0, 250.0), Point::new(300.0, 250.0)],
        vec![(0, 1)],
    )
}

/// L shape: east leg 100 m, north leg 80 m.
pub fn l_shape() -> WorldMap {
    base(
        vec![
            Point::new(100.0, 100.0),
            Point::new(200.0, 100.0),
            Point::new(200.0, 180.0),
        ],
        vec![(0, 1), (1, 2)],
    )
}

/// T: west arm, east arm, north arm meeting at (250,250).
pub fn tee() -> WorldMap {
    base(
        vec![
            Point::new(250.0, 250.0),
            Point::new(150.0, 250.0),
            Point::new(350.0, 250.0),
            Point::new(250.0, 350.0),
        ],
        vec![(1, 0), (0, 2), (0, 3)],
    )
}

/// Places a parked car centred `s` metres along `lane`.
pub fn with_parked(mut map: WorldMap, lane: LaneRef, s: f64) -> WorldMap {
    let footprint = map.car_footprint(&map.lane_pose(lane, s));
    let id = ObstacleId(map.parked.len() as u32);
    map.parked.push(ParkedObstacle {
        id,
        footprint,
        lane,
    });
    map
}

/// Adds a moving car `s` metres along `lane` and raises the population to
/// match.
pub fn with_moving(mut map: WorldMap, lane: LaneRef, s: f64) -> WorldMap {
    let id = map.moving_cars.len() as u32;
    map.moving_cars.push(MovingCarStart {
        id,
        lane,
        offset: s,
    });
    map.moving_car_count = map.moving_cars.len() as u32;
    map
}

/// 300 m straight road, vehicle at 10 m, a parked car in its lane 20 m
/// ahead and the target 140 m along.
pub fn overtake() -> WorldMap {
    let mut m = base(
        vec![Point::new(100.0, 250.0), Point::new(400.0, 250.0)],
        vec![(0, 1)],
    );
    let lane = LaneRef::new(RoadId(0), LaneDir::Forward);
    m.target = m.lane_point(lane, 140.0);
    with_parked(m, lane, 30.0)
}

/// [`overtake`] with an oncoming car starting `s` metres along the opposing
/// lane (measured from the far end).
pub fn overtake_with_oncoming(s: f64) -> WorldMap {
    let m = overtake();
    with_moving(m, LaneRef::new(RoadId(0), LaneDir::Backward), s)
}
