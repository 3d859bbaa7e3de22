//! Deterministic road-world simulator with a fault-injectable vehicle
//! controller, and a situation-coverage test generation harness built on it.

pub mod coverage;
pub mod experiment;
pub mod geom;
pub mod mapgen;
pub mod rng;
pub mod scenarios;
pub mod sim;
pub mod sut;
pub mod testgen;
pub mod traffic;
pub mod world;
