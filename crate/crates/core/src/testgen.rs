//! Campaign engines: coverage-filtered generation and budget-limited random
//! generation.

use crate::coverage::{
    cell_of, measure_criteria, CoverageCell, CoverageError, CoverageTracker, CriteriaBounds,
};
use crate::experiment::{evaluate_map, internal_seed_for, MatrixRow};
use crate::mapgen::{generate_map, GenConfig, GenError};
use crate::rng::{derive_seed, StreamTag};
use crate::sim::{sha256_hex, RunConfig, SimError};
use crate::world::WorldMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Run(#[from] SimError),
    #[error(transparent)]
    Bounds(#[from] CoverageError),
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    CoverageDriven,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::CoverageDriven => "coverage",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CampaignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coverage" => Ok(Method::CoverageDriven),
            "random" => Ok(Method::Random),
            _ => Err(CampaignError::InvalidConfig(format!(
                "unknown method {s:?}, expected coverage or random"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BudgetMode {
    #[default]
    SimulationSteps,
    WallClockSeconds,
}

impl FromStr for BudgetMode {
    type Err = CampaignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "steps" => Ok(BudgetMode::SimulationSteps),
            "wall-clock" => Ok(BudgetMode::WallClockSeconds),
            _ => Err(CampaignError::InvalidConfig(format!(
                "unknown budget mode {s:?}, expected steps or wall-clock"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub mode: BudgetMode,
    pub amount: f64,
}

impl Budget {
    pub fn steps(amount: u64) -> Self {
        Self {
            mode: BudgetMode::SimulationSteps,
            amount: amount as f64,
        }
    }

    pub fn seconds(amount: f64) -> Self {
        Self {
            mode: BudgetMode::WallClockSeconds,
            amount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub method: Method,
    pub master_seed: u64,
    /// Candidates examined by a coverage campaign.
    pub candidate_limit: u64,
    /// Spend allowed to a random campaign.
    pub budget: Option<Budget>,
    pub gen_config: GenConfig,
    /// Template for every run; the internal seed and fault set are replaced
    /// per run.
    pub run_config: RunConfig,
    pub bounds: CriteriaBounds,
}

impl CampaignConfig {
    /// Defaults for `method`: 2,000 candidates, criteria bounds sized to the
    /// generator's map bounds, no budget.
    pub fn new(method: Method, master_seed: u64) -> Self {
        let gen_config = GenConfig::default();
        let b = gen_config.bounds();
        Self {
            method,
            master_seed,
            candidate_limit: 2_000,
            budget: None,
            bounds: CriteriaBounds::for_diagonal(b.width().hypot(b.height())),
            gen_config,
            run_config: RunConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        match self.method {
            Method::CoverageDriven if self.candidate_limit < 1 => {
                return Err(CampaignError::InvalidConfig(
                    "candidate_limit must be at least 1".into(),
                ))
            }
            Method::Random => match self.budget {
                Some(b) if b.amount > 0.0 && b.amount.is_finite() => {}
                Some(b) => {
                    return Err(CampaignError::InvalidConfig(format!(
                        "budget must be positive, got {}",
                        b.amount
                    )))
                }
                None => {
                    return Err(CampaignError::InvalidConfig(
                        "random campaign needs a budget".into(),
                    ))
                }
            },
            _ => {}
        }
        self.gen_config.validate()?;
        self.run_config.validate()?;
        self.bounds.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accepted,
    Discarded,
    /// The generator gave up on this seed. Counted as discarded.
    GenerationFailed,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Accepted => "accepted",
            Decision::Discarded => "discarded",
            Decision::GenerationFailed => "generation_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: u64,
    pub external_seed: u64,
    pub cell: Option<CoverageCell>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub method: Method,
    pub master_seed: u64,
    pub candidates: Vec<Candidate>,
    /// Accepted maps in acceptance order, with their fault sweeps.
    pub maps: Vec<MatrixRow>,
    pub discarded_count: u64,
    pub tracker: CoverageTracker,
    /// Simulation steps summed over every run.
    pub steps_spent: u64,
    /// Elapsed time including map generation.
    pub wall_seconds: f64,
    /// (candidates examined, coverage fraction) after each candidate.
    pub coverage_curve: Vec<(u64, f64)>,
}

impl CampaignResult {
    pub fn accepted_count(&self) -> u64 {
        self.maps.len() as u64
    }

    /// The accepted (external seed, cell) pairs.
    pub fn accepted_maps(&self) -> Vec<(u64, CoverageCell)> {
        self.maps
            .iter()
            .map(|r| (r.external_seed, r.cell))
            .collect()
    }

    pub fn spent(&self, mode: BudgetMode) -> f64 {
        match mode {
            BudgetMode::SimulationSteps => self.steps_spent as f64,
            BudgetMode::WallClockSeconds => self.wall_seconds,
        }
    }

    /// The campaign as it stood after its first `limit` candidates. For a
    /// coverage campaign this equals a fresh run at that limit, apart from
    /// `wall_seconds`, which becomes the summed per-map simulation time.
    pub fn truncated(&self, limit: u64) -> CampaignResult {
        let candidates: Vec<Candidate> = self
            .candidates
            .iter()
            .filter(|c| c.index < limit)
            .copied()
            .collect();
        let maps: Vec<MatrixRow> = self
            .maps
            .iter()
            .filter(|m| m.candidate_index < limit)
            .cloned()
            .collect();
        let mut tracker = CoverageTracker::new(self.tracker.bounds);
        for c in &candidates {
            if let Some(cell) = c.cell {
                tracker.record_at(cell, c.index);
            }
        }
        let mut config = self.config.clone();
        if self.method == Method::CoverageDriven {
            config.candidate_limit = config.candidate_limit.min(limit);
        }
        CampaignResult {
            config,
            method: self.method,
            master_seed: self.master_seed,
            discarded_count: candidates
                .iter()
                .filter(|c| c.decision != Decision::Accepted)
                .count() as u64,
            steps_spent: maps.iter().map(MatrixRow::steps).sum(),
            wall_seconds: maps.iter().map(|m| m.seconds).sum(),
            coverage_curve: self
                .coverage_curve
                .iter()
                .filter(|(n, _)| *n <= limit)
                .copied()
                .collect(),
            candidates,
            maps,
            tracker,
        }
    }

    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timing(&self) -> CampaignResult {
        let mut r = self.clone();
        r.wall_seconds = 0.0;
        for m in &mut r.maps {
            m.seconds = 0.0;
        }
        r
    }

    /// `index,external_seed,cell,decision`; `cell` is empty when
    /// generation failed.
    pub fn candidates_csv(&self) -> String {
        let mut s = String::from("index,external_seed,cell,decision\n");
        for c in &self.candidates {
            let cell = c.cell.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{cell},{}",
                c.index,
                c.external_seed,
                c.decision.name()
            );
        }
        s
    }
}

/// Budget granting another campaign the spend of `reference` in `mode`.
pub fn budget_match(reference: &CampaignResult, mode: BudgetMode) -> Budget {
    Budget {
        mode,
        amount: reference.spent(mode),
    }
}

fn candidate_seed(master: u64, method: Method, index: u64) -> u64 {
    let tag = match method {
        Method::CoverageDriven => StreamTag::CoverageCandidates,
        Method::Random => StreamTag::RandomCandidates,
    };
    derive_seed(master, tag, index)
}

fn simulate(
    map: &WorldMap,
    candidate_index: u64,
    cell: CoverageCell,
    template: &RunConfig,
) -> MatrixRow {
    let t = Instant::now();
    let internal_seed = internal_seed_for(map.external_seed);
    let runs = evaluate_map(
        map,
        &RunConfig {
            internal_seed,
            ..template.clone()
        },
    );
    MatrixRow {
        candidate_index,
        external_seed: map.external_seed,
        internal_seed,
        cell,
        runs,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Candidates are generated and measured in batches of this size before the
/// sequential accept/discard pass.
const GEN_BATCH: u64 = 64;

/// Examines exactly `candidate_limit` candidates. A candidate whose cell is
/// already filled is discarded before simulation; accepted maps are then
/// swept over the seven faults.
pub fn coverage_campaign(config: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    if config.method != Method::CoverageDriven {
        return Err(CampaignError::InvalidConfig(
            "coverage_campaign needs method coverage".into(),
        ));
    }
    config.validate()?;
    let start = Instant::now();
    let mut tracker = CoverageTracker::new(config.bounds);
    let mut candidates = Vec::with_capacity(config.candidate_limit as usize);
    let mut accepted: Vec<(u64, CoverageCell, WorldMap)> = Vec::new();
    let mut curve = Vec::with_capacity(config.candidate_limit as usize);
    let mut next = 0;
    while next < config.candidate_limit {
        let end = (next + GEN_BATCH).min(config.candidate_limit);
        let batch: Vec<(u64, Option<(WorldMap, CoverageCell)>)> = (next..end)
            .into_par_iter()
            .map(|i| {
                let seed = candidate_seed(config.master_seed, Method::CoverageDriven, i);
                let m = generate_map(seed, &config.gen_config).ok().map(|m| {
                    let cell = cell_of(&measure_criteria(&m), &config.bounds);
                    (m, cell)
                });
                (seed, m)
            })
            .collect();
        for (i, (seed, gen)) in (next..end).zip(batch) {
            let (cell, decision) = match gen {
                None => (None, Decision::GenerationFailed),
                Some((map, cell)) => {
                    if tracker.record_at(cell, i) {
                        accepted.push((i, cell, map));
                        (Some(cell), Decision::Accepted)
                    } else {
                        (Some(cell), Decision::Discarded)
                    }
                }
            };
            candidates.push(Candidate {
                index: i,
                external_seed: seed,
                cell,
                decision,
            });
            curve.push((i + 1, tracker.coverage_fraction()));
        }
        next = end;
    }
    let maps: Vec<MatrixRow> = accepted
        .par_iter()
        .map(|(i, cell, map)| simulate(map, *i, *cell, &config.run_config))
        .collect();
    Ok(CampaignResult {
        config: config.clone(),
        method: Method::CoverageDriven,
        master_seed: config.master_seed,
        discarded_count: candidates.len() as u64 - maps.len() as u64,
        steps_spent: maps.iter().map(MatrixRow::steps).sum(),
        wall_seconds: start.elapsed().as_secs_f64(),
        coverage_curve: curve,
        candidates,
        maps,
        tracker,
    })
}

/// Generates and simulates maps until the budget is spent. Every generated
/// map is accepted; a map whose sweep starts within budget completes even if
/// it overruns. The tracker is recorded for reporting only.
pub fn random_campaign(config: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    if config.method != Method::Random {
        return Err(CampaignError::InvalidConfig(
            "random_campaign needs method random".into(),
        ));
    }
    config.validate()?;
    let budget = config.budget.expect("validated");
    let start = Instant::now();
    let mut tracker = CoverageTracker::new(config.bounds);
    let mut candidates = Vec::new();
    let mut maps: Vec<MatrixRow> = Vec::new();
    let mut curve = Vec::new();
    let mut steps = 0u64;
    let width = rayon::current_num_threads().max(1) as u64;
    let mut next = 0u64;
    let spent = |steps: u64| match budget.mode {
        BudgetMode::SimulationSteps => steps as f64,
        BudgetMode::WallClockSeconds => start.elapsed().as_secs_f64(),
    };
    'outer: while spent(steps) < budget.amount {
        // Under a step budget the batch is evaluated speculatively and
        // consumed in order, so the result does not depend on `width`.
        let batch: Vec<(u64, Option<MatrixRow>)> = (next..next + width)
            .into_par_iter()
            .map(|i| {
                let seed = candidate_seed(config.master_seed, Method::Random, i);
                let row = generate_map(seed, &config.gen_config).ok().map(|m| {
                    let cell = cell_of(&measure_criteria(&m), &config.bounds);
                    simulate(&m, i, cell, &config.run_config)
                });
                (seed, row)
            })
            .collect();
        for (i, (seed, row)) in (next..).zip(batch) {
            if budget.mode == BudgetMode::SimulationSteps && steps as f64 >= budget.amount {
                break 'outer;
            }
            let (cell, decision) = match row {
                None => (None, Decision::GenerationFailed),
                Some(row) => {
                    tracker.record_at(row.cell, i);
                    steps += row.steps();
                    let cell = row.cell;
                    maps.push(row);
                    (Some(cell), Decision::Accepted)
                }
            };
            candidates.push(Candidate {
                index: i,
                external_seed: seed,
                cell,
                decision,
            });
            curve.push((i + 1, tracker.coverage_fraction()));
        }
        next += width;
    }
    Ok(CampaignResult {
        config: config.clone(),
        method: Method::Random,
        master_seed: config.master_seed,
        discarded_count: candidates.len() as u64 - maps.len() as u64,
        steps_spent: steps,
        wall_seconds: start.elapsed().as_secs_f64(),
        coverage_curve: curve,
        candidates,
        maps,
        tracker,
    })
}

/// Dispatches on `config.method`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    match config.method {
        Method::CoverageDriven => coverage_campaign(config),
        Method::Random => random_campaign(config),
    }
}

/// Campaign manifest: headline counts and config digests next to the full
/// result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: Method,
    pub master_seed: u64,
    pub replication: u32,
    pub gen_config_digest: String,
    pub run_config_digest: String,
    pub bounds: CriteriaBounds,
    pub candidates: u64,
    pub accepted: u64,
    pub discarded: u64,
    pub steps_spent: u64,
    pub wall_seconds: f64,
    pub result: CampaignResult,
}

impl Manifest {
    pub fn of(result: &CampaignResult, replication: u32) -> Self {
        let gen = serde_json::to_string(&result.config.gen_config).expect("config serialises");
        Self {
            method: result.method,
            master_seed: result.master_seed,
            replication,
            gen_config_digest: sha256_hex(gen.as_bytes()),
            run_config_digest: result.config.run_config.digest(),
            bounds: result.tracker.bounds,
            candidates: result.candidates.len() as u64,
            accepted: result.accepted_count(),
            discarded: result.discarded_count,
            steps_spent: result.steps_spent,
            wall_seconds: result.wall_seconds,
            result: result.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    /// Parses and checks the headline fields against the embedded result.
    pub fn from_json(s: &str) -> Result<Self, CampaignError> {
        let m: Manifest =
            serde_json::from_str(s).map_err(|e| CampaignError::Manifest(e.to_string()))?;
        let fresh = Manifest::of(&m.result, m.replication);
        if fresh != m {
            return Err(CampaignError::Manifest(
                "headline fields disagree with the embedded result".into(),
            ));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::Range;

    fn small(method: Method, seed: u64) -> CampaignConfig {
        let mut c = CampaignConfig::new(method, seed);
        c.gen_config.junction_count_range = [4, 5];
        c.gen_config.parked_range = [0, 2];
        c.gen_config.moving_range = [0, 1];
        c.run_config.max_steps = 300;
        c
    }

    #[test]
    fn config_validation() {
        let mut c = small(Method::CoverageDriven, 1);
        c.candidate_limit = 0;
        assert!(matches!(c.validate(), Err(CampaignError::InvalidConfig(_))));
        let mut r = small(Method::Random, 1);
        assert!(r.validate().is_err());
        r.budget = Some(Budget::steps(0));
        assert!(r.validate().is_err());
        r.budget = Some(Budget::steps(10));
        assert!(r.validate().is_ok());
        assert!(coverage_campaign(&r).is_err());
        assert_eq!("random".parse::<Method>(), Ok(Method::Random));
        assert!("grid".parse::<Method>().is_err());
    }

    #[test]
    fn single_candidate_is_accepted() {
        let mut c = small(Method::CoverageDriven, 3);
        c.candidate_limit = 1;
        let r = coverage_campaign(&c).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.maps.len(), 1);
        assert_eq!(r.discarded_count, 0);
        assert_eq!(r.steps_spent, r.maps[0].steps());
    }

    #[test]
    fn collapsed_bounds_force_one_cell() {
        // Every criterion maps to level 5, so all candidates share a cell.
        let mut c = small(Method::CoverageDriven, 4);
        c.candidate_limit = 3;
        c.bounds.dist_prev_junction_target = Range::new(-2.0, -1.0);
        c.bounds.min_dist_target_obstacle = Range::new(-2.0, -1.0);
        c.bounds.dist_start_target = Range::new(-2.0, -1.0);
        let r = coverage_campaign(&c).unwrap();
        assert_eq!(r.maps.len(), 1);
        assert_eq!(r.discarded_count, 2);
        assert_eq!(r.candidates[0].decision, Decision::Accepted);
        assert!(r.candidates[1..]
            .iter()
            .all(|c| c.decision == Decision::Discarded));
        assert_eq!(r.tracker.filled_count(), 1);
    }

    #[test]
    fn coverage_campaign_invariants_and_prefix() {
        let mut c = small(Method::CoverageDriven, 5);
        c.candidate_limit = 40;
        let r = coverage_campaign(&c).unwrap();
        assert_eq!(r.maps.len() as u64 + r.discarded_count, 40);
        let cells: std::collections::BTreeSet<_> = r.maps.iter().map(|m| m.cell).collect();
        assert_eq!(cells.len(), r.maps.len());
        assert_eq!(r.tracker.filled_count(), r.maps.len());
        assert_eq!(r.coverage_curve.len(), 40);
        assert!(r.coverage_curve.windows(2).all(|w| w[0].1 <= w[1].1));
        c.candidate_limit = 25;
        let short = coverage_campaign(&c).unwrap();
        assert_eq!(r.truncated(25).without_timing(), short.without_timing());
    }

    #[test]
    fn random_budget_accounting_and_determinism() {
        let mut cov = small(Method::CoverageDriven, 6);
        cov.candidate_limit = 12;
        let reference = coverage_campaign(&cov).unwrap();
        let budget = budget_match(&reference, BudgetMode::SimulationSteps);
        assert_eq!(budget.amount, reference.steps_spent as f64);
        let mut rc = small(Method::Random, 7);
        rc.budget = Some(budget);
        let a = random_campaign(&rc).unwrap();
        let b = random_campaign(&rc).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        // The last map starts within budget, so the overrun is below one sweep.
        let last = a.maps.last().unwrap().steps();
        assert!(a.steps_spent as f64 >= budget.amount);
        assert!(((a.steps_spent - last) as f64) < budget.amount);
        assert_eq!(
            a.discarded_count,
            a.candidates
                .iter()
                .filter(|c| c.decision != Decision::Accepted)
                .count() as u64
        );
        let wall = budget_match(&reference, BudgetMode::WallClockSeconds);
        assert_eq!(wall, Budget::seconds(reference.wall_seconds));
    }

    #[test]
    fn tiny_budget_gives_one_map() {
        let mut rc = small(Method::Random, 8);
        rc.budget = Some(Budget::steps(1));
        let r = random_campaign(&rc).unwrap();
        assert_eq!(r.maps.len(), 1);
    }

    #[test]
    fn manifest_round_trip() {
        let mut c = small(Method::CoverageDriven, 9);
        c.candidate_limit = 5;
        let r = coverage_campaign(&c).unwrap();
        let m = Manifest::of(&r, 2);
        let back = Manifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut tampered = m.clone();
        tampered.accepted += 1;
        assert!(Manifest::from_json(&tampered.to_json()).is_err());
        let csv = r.candidates_csv();
        assert_eq!(csv.lines().count(), 6);
    }
}
