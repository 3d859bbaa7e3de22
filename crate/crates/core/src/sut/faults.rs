//! Seeded fault catalogue and trigger accounting.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Identifier of a catalogued fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FaultId(u8);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown fault id {0} (known: 2, 4, 8, 10, 12, 17, 18)")]
pub struct UnknownFault(pub String);

impl FaultId {
    pub const WAYPOINT_NE: FaultId = FaultId(2);
    pub const WAYPOINT_SE: FaultId = FaultId(4);
    pub const SCAN_HALF_ARC: FaultId = FaultId(8);
    pub const SCAN_RESOLUTION: FaultId = FaultId(10);
    pub const SCAN_RANGE: FaultId = FaultId(12);
    pub const OVERTAKE_STEER: FaultId = FaultId(17);
    pub const OVERTAKE_LOOKOUT: FaultId = FaultId(18);

    pub const ALL: [FaultId; 7] = [
        Self::WAYPOINT_NE,
        Self::WAYPOINT_SE,
        Self::SCAN_HALF_ARC,
        Self::SCAN_RESOLUTION,
        Self::SCAN_RANGE,
        Self::OVERTAKE_STEER,
        Self::OVERTAKE_LOOKOUT,
    ];

    pub fn new(id: u8) -> Result<Self, UnknownFault> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.0 == id)
            .ok_or_else(|| UnknownFault(id.to_string()))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Column position of this fault in `ALL`.
    pub fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|f| *f == self)
            .expect("catalogued")
    }

    pub fn info(self) -> &'static FaultInfo {
        &CATALOGUE[self.index()]
    }
}

impl TryFrom<u8> for FaultId {
    type Error = UnknownFault;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        FaultId::new(v)
    }
}

impl From<FaultId> for u8 {
    fn from(f: FaultId) -> u8 {
        f.0
    }
}

impl fmt::Display for FaultId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for FaultId {
    type Err = UnknownFault;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: u8 = s.trim().parse().map_err(|_| UnknownFault(s.to_string()))?;
        FaultId::new(v)
    }
}

/// Catalogue entry describing one fault and where it hooks into the controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultInfo {
    pub id: FaultId,
    pub description: String,
    pub hook: String,
    pub parameters: String,
}

static CATALOGUE: std::sync::LazyLock<Vec<FaultInfo>> = std::sync::LazyLock::new(|| {
    let e = |id: u8, description: &str, hook: &str, parameters: &str| FaultInfo {
        id: FaultId(id),
        description: description.to_string(),
        hook: hook.to_string(),
        parameters: parameters.to_string(),
    };
    vec![
        e(
            2,
            "Waypoints are shifted a little towards the north-east of where they should be",
            "sut::control::next_waypoint",
            "offset (+delta, +delta), delta = 0.5 m",
        ),
        e(
            4,
            "Waypoints are shifted a little towards the south-east of where they should be",
            "sut::control::next_waypoint",
            "offset (+delta, -delta), delta = 0.5 m",
        ),
        e(
            8,
            "The road-marking scan skips the rays in the lower half of its arc",
            "sut::sensing::scan_road_markings",
            "rays with bearing below the arc midpoint are dropped",
        ),
        e(
            10,
            "The road-marking scan uses half as many rays",
            "sut::sensing::scan_road_markings",
            "ray step doubled",
        ),
        e(
            12,
            "The road-marking scan only reaches half as far",
            "sut::sensing::scan_road_markings",
            "marking range halved",
        ),
        e(
            17,
            "During an overtake the steering stops tracking the waypoint",
            "sut::control::control_step",
            "steer held at its value on overtake entry",
        ),
        e(
            18,
            "During an overtake the clearance check looks along the current heading instead of the planned path",
            "sut::control::clearance_corridor",
            "corridor anchored at the vehicle, aligned with its heading",
        ),
    ]
});

/// The full catalogue in id order.
pub fn catalogue() -> &'static [FaultInfo] {
    &CATALOGUE
}

/// Set of enabled faults. Empty means the nominal controller.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultSet(BTreeSet<FaultId>);

impl FaultSet {
    pub fn nominal() -> Self {
        Self::default()
    }

    pub fn single(f: FaultId) -> Self {
        Self(BTreeSet::from([f]))
    }

    pub fn contains(&self, f: FaultId) -> bool {
        self.0.contains(&f)
    }

    pub fn insert(&mut self, f: FaultId) {
        self.0.insert(f);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = FaultId> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<FaultId> for FaultSet {
    fn from_iter<I: IntoIterator<Item = FaultId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for FaultSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "none");
        }
        let ids: Vec<String> = self.0.iter().map(|id| id.to_string()).collect();
        write!(f, "{}", ids.join(","))
    }
}

impl FromStr for FaultSet {
    type Err = UnknownFault;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "none" || s.is_empty() {
            return Ok(Self::default());
        }
        s.split(',').map(str::parse).collect()
    }
}

/// Per-fault trigger counters for one run. Only enabled faults count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerLog {
    enabled: FaultSet,
    counts: BTreeMap<FaultId, u64>,
}

impl TriggerLog {
    pub fn new(enabled: FaultSet) -> Self {
        Self {
            enabled,
            counts: BTreeMap::new(),
        }
    }

    pub fn enabled(&self) -> &FaultSet {
        &self.enabled
    }

    pub fn is_on(&self, f: FaultId) -> bool {
        self.enabled.contains(f)
    }

    pub fn hit(&mut self, f: FaultId, n: u64) {
        if n > 0 && self.enabled.contains(f) {
            *self.counts.entry(f).or_insert(0) += n;
        }
    }

    pub fn count(&self, f: FaultId) -> u64 {
        self.counts.get(&f).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<FaultId, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}
