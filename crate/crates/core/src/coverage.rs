//! Situation criteria, six-level discretisation and the 216-cell tracker.

use crate::world::{network_shortest_path, NetPos, Network, WorldMap};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

pub const LEVELS: u8 = 6;
pub const CELL_COUNT: usize = 216;

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("invalid bounds for {name}: min {min} must be below max {max}")]
    InvalidBounds {
        name: &'static str,
        min: f64,
        max: f64,
    },
}

/// The three static situation measures of a map, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SituationCriteria {
    pub dist_prev_junction_target: f64,
    pub min_dist_target_obstacle: f64,
    pub dist_start_target: f64,
}

impl SituationCriteria {
    pub fn as_array(&self) -> [f64; 3] {
        [
            self.dist_prev_junction_target,
            self.min_dist_target_obstacle,
            self.dist_start_target,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaBounds {
    pub dist_prev_junction_target: Range,
    pub min_dist_target_obstacle: Range,
    pub dist_start_target: Range,
}

impl CriteriaBounds {
    /// Defaults for a map whose bounding box has diagonal `diagonal`.
    ///
    /// Criterion 1 is capped at 90 m: a target can never sit further than
    /// half the longest generated road from a junction, so a diagonal-wide
    /// range would leave five of its six levels unreachable.
    pub fn for_diagonal(diagonal: f64) -> Self {
        Self {
            dist_prev_junction_target: Range::new(0.0, 90.0),
            min_dist_target_obstacle: Range::new(0.0, 100.0),
            dist_start_target: Range::new(0.0, diagonal),
        }
    }

    pub fn ranges(&self) -> [(&'static str, Range); 3] {
        [
            ("dist_prev_junction_target", self.dist_prev_junction_target),
            ("min_dist_target_obstacle", self.min_dist_target_obstacle),
            ("dist_start_target", self.dist_start_target),
        ]
    }

    pub fn validate(&self) -> Result<(), CoverageError> {
        for (name, r) in self.ranges() {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(CoverageError::InvalidBounds {
                    name,
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(())
    }
}

impl Default for CriteriaBounds {
    /// Defaults for the default 500 m × 500 m map.
    fn default() -> Self {
        Self::for_diagonal(500f64.hypot(500.0))
    }
}

/// A point of the discretised criteria space; each level is in `0..6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoverageCell {
    pub levels: [u8; 3],
}

impl CoverageCell {
    /// # Panics
    /// If any level is 6 or more.
    pub fn new(levels: [u8; 3]) -> Self {
        assert!(
            levels.iter().all(|l| *l < LEVELS),
            "level out of range: {levels:?}"
        );
        Self { levels }
    }

    /// Dense index in `0..216`, first criterion most significant.
    pub fn index(self) -> usize {
        let [a, b, c] = self.levels.map(usize::from);
        (a * 6 + b) * 6 + c
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < CELL_COUNT);
        Self::new([(i / 36) as u8, (i / 6 % 6) as u8, (i % 6) as u8])
    }

    pub fn all() -> impl Iterator<Item = CoverageCell> {
        (0..CELL_COUNT).map(Self::from_index)
    }
}

impl std::fmt::Display for CoverageCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c] = self.levels;
        write!(f, "{a}-{b}-{c}")
    }
}

/// Measures the three criteria on the static map. Moving cars are ignored.
pub fn measure_criteria(map: &WorldMap) -> SituationCriteria {
    let target = map.target;
    let dist_prev_junction_target = match Network::locate(map, target) {
        Some(NetPos::Road { road, t }) => t.min(map.road_length(road) - t),
        Some(NetPos::Junction(_)) | None => 0.0,
    };
    let min_dist_target_obstacle = map
        .parked
        .iter()
        .map(|p| p.footprint.distance_to_point(target))
        .reduce(f64::min)
        .unwrap_or_else(|| map.bounds.diagonal());
    let dist_start_target = network_shortest_path(map, map.ar_start.position, target)
        .ok()
        .filter(|d| d.is_finite())
        .unwrap_or_else(|| map.bounds.diagonal());
    SituationCriteria {
        dist_prev_junction_target,
        min_dist_target_obstacle,
        dist_start_target,
    }
}

/// `clamp(floor(6 (value - min) / (max - min)), 0, 5)`.
pub fn discretize(value: f64, min: f64, max: f64) -> u8 {
    debug_assert!(min < max);
    let l = (6.0 * (value - min) / (max - min)).floor();
    if l.is_nan() || l <= 0.0 {
        0
    } else if l >= 5.0 {
        5
    } else {
        l as u8
    }
}

pub fn cell_of(c: &SituationCriteria, bounds: &CriteriaBounds) -> CoverageCell {
    let v = c.as_array();
    let r = bounds.ranges();
    CoverageCell::new(std::array::from_fn(|i| {
        discretize(v[i], r[i].1.min, r[i].1.max)
    }))
}

/// Filled cells, with the candidate index that first filled each one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTracker {
    pub bounds: CriteriaBounds,
    #[serde(with = "filled_as_pairs")]
    filled: BTreeMap<CoverageCell, u64>,
    records: u64,
}

// JSON object keys must be strings, so the map is stored as a pair list.
mod filled_as_pairs {
    use super::CoverageCell;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<CoverageCell, u64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        m.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<CoverageCell, u64>, D::Error> {
        Ok(Vec::<(CoverageCell, u64)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

impl CoverageTracker {
    pub fn new(bounds: CriteriaBounds) -> Self {
        Self {
            bounds,
            filled: BTreeMap::new(),
            records: 0,
        }
    }

    /// Inserts `cell`; true if it was not filled before. The call count is
    /// used as the candidate index.
    pub fn record(&mut self, cell: CoverageCell) -> bool {
        let idx = self.records;
        self.record_at(cell, idx)
    }

    /// Like [`record`](Self::record), attributing a new fill to `candidate`.
    pub fn record_at(&mut self, cell: CoverageCell, candidate: u64) -> bool {
        self.records += 1;
        match self.filled.entry(cell) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(candidate);
                true
            }
        }
    }

    pub fn contains(&self, cell: CoverageCell) -> bool {
        self.filled.contains_key(&cell)
    }

    pub fn filled_count(&self) -> usize {
        self.filled.len()
    }

    pub fn filled(&self) -> impl Iterator<Item = (CoverageCell, u64)> + '_ {
        self.filled.iter().map(|(c, i)| (*c, *i))
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.filled.len() as f64 / CELL_COUNT as f64
    }

    /// 216 rows `level1,level2,level3,filled,first_candidate`; the last
    /// column is empty for unfilled cells.
    pub fn snapshot_csv(&self) -> String {
        let mut s = String::from("level1,level2,level3,filled,first_candidate\n");
        for cell in CoverageCell::all() {
            let [a, b, c] = cell.levels;
            match self.filled.get(&cell) {
                Some(i) => writeln!(s, "{a},{b},{c},1,{i}"),
                None => writeln!(s, "{a},{b},{c},0,"),
            }
            .expect("write to string");
        }
        s
    }
}
