use super::*;
use crate::geom::Point;
use crate::scenarios;
use crate::world::{LaneDir, LaneRef, RoadId};

fn cfg(faults: FaultSet) -> RunConfig {
    RunConfig {
        fault_set: faults,
        ..RunConfig::default()
    }
}

fn fwd() -> LaneRef {
    LaneRef::new(RoadId(0), LaneDir::Forward)
}

fn rec(step: u64, pose: Pose, justified: bool) -> TrajectoryRecord {
    TrajectoryRecord {
        step,
        pose,
        mode: if justified {
            Mode::Overtaking
        } else {
            Mode::Driving
        },
        justified,
        cars: vec![],
    }
}

#[test]
fn short_empty_road_reaches_target_without_events() {
    let map = scenarios::straight();
    let r = run(&map, &cfg(FaultSet::nominal()));
    assert_eq!(r.outcome, Outcome::TargetReached);
    assert!(r.events.is_empty(), "{:?}", r.events);
    assert!(r.steps_executed > 0 && r.steps_executed < 200);
    let last = r.trajectory.as_ref().unwrap().last().unwrap();
    assert!(last.pose.position.dist(map.target) <= 2.0);
}

#[test]
fn start_at_target_ends_at_step_zero() {
    let mut map = scenarios::straight();
    map.target = map.ar_start.position + Point::new(1.0, 0.0);
    let r = run(&map, &cfg(FaultSet::single(FaultId::WAYPOINT_NE)));
    assert_eq!(r.outcome, Outcome::TargetReached);
    assert_eq!(r.steps_executed, 0);
    assert!(r.trigger_counts.is_empty());
}

#[test]
fn runs_are_deterministic() {
    let map = scenarios::overtake_with_oncoming(170.0);
    let c = cfg(FaultSet::single(FaultId::OVERTAKE_LOOKOUT));
    assert_eq!(run(&map, &c), run(&map, &c));
}

#[test]
fn nominal_overtake_is_clean() {
    let map = scenarios::overtake();
    let r = run(&map, &cfg(FaultSet::nominal()));
    assert_eq!(r.outcome, Outcome::TargetReached);
    assert!(r.events.is_empty(), "{:?}", r.events);
    assert!(r
        .trajectory
        .unwrap()
        .iter()
        .any(|t| t.mode == Mode::Overtaking));
}

#[test]
fn lookout_fault_meets_oncoming_car() {
    let map = scenarios::overtake_with_oncoming(170.0);
    let nominal = run(&map, &cfg(FaultSet::nominal()));
    assert!(nominal.events.is_empty(), "{:?}", nominal.events);
    let faulty = run(&map, &cfg(FaultSet::single(FaultId::OVERTAKE_LOOKOUT)));
    assert!(faulty.triggered(FaultId::OVERTAKE_LOOKOUT));
    assert!(faulty.events.iter().any(|e| matches!(
        e.kind,
        AccidentKind::ClashWithOtherCar | AccidentKind::CrossCentreline
    )));
}

#[test]
fn frozen_steer_fault_changes_the_overtake() {
    let map = scenarios::overtake();
    let nominal = run(&map, &cfg(FaultSet::nominal()));
    let faulty = run(&map, &cfg(FaultSet::single(FaultId::OVERTAKE_STEER)));
    assert!(faulty.triggered(FaultId::OVERTAKE_STEER));
    assert_ne!(nominal.trajectory, faulty.trajectory);
    assert!(!faulty.events.is_empty());
}

#[test]
fn monitor_quiet_in_own_lane() {
    let map = scenarios::straight();
    let pose = map.lane_pose(fwd(), 50.0);
    assert!(raw_accidents(&map, &pose, &[], false).is_empty());
}

#[test]
fn monitor_flags_overlap_with_parked_car() {
    let map = scenarios::with_parked(scenarios::straight(), fwd(), 50.0);
    // Nose 0.1 m into the parked car's tail.
    let pose = map.lane_pose(fwd(), 50.0 - map.car_length + 0.1);
    let got = raw_accidents(&map, &pose, &[], false);
    assert_eq!(
        got,
        vec![(
            AccidentKind::ClashWithObstacle,
            Some(Counterpart::Obstacle(crate::world::ObstacleId(0)))
        )]
    );
    let touching = map.lane_pose(fwd(), 50.0 - map.car_length);
    assert!(raw_accidents(&map, &touching, &[], false).is_empty());
}

#[test]
fn monitor_flags_moving_car_and_leaving_road() {
    let map = scenarios::straight();
    let pose = map.lane_pose(fwd(), 50.0);
    let other = map.lane_pose(fwd(), 53.0);
    assert_eq!(
        raw_accidents(&map, &pose, &[(4, other)], false),
        vec![(AccidentKind::ClashWithOtherCar, Some(Counterpart::Car(4)))]
    );
    let off = Pose::new(Point::new(150.0, 260.0), 0.0);
    assert_eq!(
        raw_accidents(&map, &off, &[], false),
        vec![(AccidentKind::LeaveRoad, None)]
    );
}

#[test]
fn centreline_needs_justification() {
    let map = scenarios::straight();
    let opposing = map.lane_pose(fwd().reversed(), 100.0);
    let wrong_way = Pose::new(opposing.position, 0.0);
    assert!(raw_accidents(&map, &wrong_way, &[], true).is_empty());
    assert_eq!(
        raw_accidents(&map, &wrong_way, &[], false),
        vec![(AccidentKind::CrossCentreline, None)]
    );
    // Driving the opposing lane in its own direction is not a crossing.
    assert!(raw_accidents(&map, &opposing, &[], false).is_empty());
    // Junction boxes are exempt.
    let in_box = Pose::new(Point::new(101.0, 251.5), 0.0);
    assert!(raw_accidents(&map, &in_box, &[], false).is_empty());
}

#[test]
fn cooldown_spaces_repeats() {
    let map = scenarios::straight();
    let off = Pose::new(Point::new(150.0, 260.0), 0.0);
    let mut m = Monitor::new();
    let steps: Vec<u64> = (1..=120)
        .flat_map(|s| m.observe(&map, &rec(s, off, false)))
        .map(|e| e.step)
        .collect();
    assert_eq!(steps, vec![1, 51, 101]);
}

#[test]
fn offline_redetection_matches_on_generated_maps() {
    let gen = crate::mapgen::GenConfig::default();
    for seed in 0..6 {
        let map = crate::mapgen::generate_map(seed, &gen).unwrap();
        let c = RunConfig {
            internal_seed: seed,
            max_steps: 3000,
            ..RunConfig::default()
        };
        let r = run(&map, &c);
        assert_eq!(
            detect_over_trajectory(&map, r.trajectory.as_ref().unwrap()),
            r.events
        );
    }
}

#[test]
fn log_round_trips() {
    let map = scenarios::overtake_with_oncoming(170.0);
    let r = run(&map, &cfg(FaultSet::single(FaultId::OVERTAKE_LOOKOUT)));
    let log = r.log();
    let text = log.emit();
    assert!(text.starts_with("sitcov-run-log 1\n"));
    assert!(text.contains("\ntrigger 18 "));
    let back = RunLog::parse(&text).unwrap();
    assert_eq!(back, log);
    assert_eq!(back.emit(), text);
}

#[test]
fn log_parse_rejects_garbage() {
    assert!(RunLog::parse("").is_err());
    let map = scenarios::straight();
    let text = run(&map, &cfg(FaultSet::nominal())).log().emit();
    assert!(RunLog::parse(&text.replace("outcome", "outcome2")).is_err());
    assert!(RunLog::parse(&format!("{text}event 1 LEAVEROAD 0 0 none\n")).is_err());
}

#[test]
fn result_json_round_trips() {
    let map = scenarios::overtake();
    let r = run(&map, &cfg(FaultSet::single(FaultId::SCAN_RANGE)));
    let json = serde_json::to_string(&r).unwrap();
    let back: RunResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn replay_separates_seeds() {
    let gen = crate::mapgen::GenConfig::default();
    let a = RunConfig {
        internal_seed: 1,
        max_steps: 500,
        ..RunConfig::default()
    };
    let b = RunConfig {
        internal_seed: 2,
        ..a.clone()
    };
    let ra = replay(9, &a, &gen).unwrap();
    assert_eq!(ra, replay(9, &a, &gen).unwrap());
    let rb = replay(9, &b, &gen).unwrap();
    assert_eq!(ra.map_ref, rb.map_ref);
    assert_ne!(ra.map_ref, replay(10, &a, &gen).unwrap().map_ref);
}

#[test]
fn replay_rejects_bad_config() {
    let gen = crate::mapgen::GenConfig::default();
    let bad = RunConfig {
        dt: 0.0,
        ..RunConfig::default()
    };
    assert!(matches!(
        replay(1, &bad, &gen),
        Err(SimError::InvalidConfig(_))
    ));
    let bad = RunConfig {
        max_steps: 0,
        ..RunConfig::default()
    };
    assert!(matches!(
        replay(1, &bad, &gen),
        Err(SimError::InvalidConfig(_))
    ));
}

#[test]
fn exports_have_expected_shape() {
    let map = scenarios::overtake();
    let r = run(&map, &cfg(FaultSet::nominal()));
    let t = r.trajectory.as_ref().unwrap();
    let csv = trajectory_csv(t);
    assert_eq!(csv.lines().next(), Some("step,x,y,heading,mode"));
    assert_eq!(csv.lines().count(), t.len() + 1);
    let svg = scene_svg(&map, Some(t));
    assert_eq!(svg.matches(r#"class="road""#).count(), map.roads.len());
    assert_eq!(svg.matches(r#"class="parked""#).count(), map.parked.len());
    assert!(svg.contains("<polyline"));
}
