//! The vehicle controller under test: sensing, navigation, waypoint
//! steering and overtaking, with the seeded faults and their trigger counts.

mod control;
mod faults;
mod sensing;

pub use control::{
    Actuation, Controller, ControllerParams, ControllerState, JunctionChoice, Mode,
    OvertakeContext, OvertakePhase, Readings,
};
pub use faults::{catalogue, FaultId, FaultInfo, FaultSet, TriggerLog, UnknownFault};
pub use sensing::{
    predict_hidden_extension, predict_trajectory, scan_obstacles, scan_road_markings, Detection,
    Marking, MarkingHit, MarkingKind, Markings, ObstacleRef, SensorParams, TrackSample,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SutError {
    #[error("trajectory prediction needs at least 2 samples, got {0}")]
    InsufficientHistory(usize),
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
}
