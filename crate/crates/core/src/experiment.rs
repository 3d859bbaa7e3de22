//! Fault sweeps per map, campaign metrics, replications and the
//! coverage/fault-finding regression.

use crate::coverage::CoverageCell;
use crate::rng::{derive_seed, StreamTag};
use crate::sim::{run, Outcome, RunConfig};
use crate::sut::{FaultId, FaultSet};
use crate::testgen::{
    budget_match, coverage_campaign, random_campaign, CampaignConfig, CampaignError,
    CampaignResult, Method,
};
use crate::world::WorldMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const FAULTS: usize = FaultId::ALL.len();

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("degenerate regression input: {0}")]
    DegenerateInput(&'static str),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error("report field {field} is {stored}, recomputed {recomputed}")]
    Integrity {
        field: &'static str,
        stored: f64,
        recomputed: f64,
    },
}

/// Summary of one single-fault run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRun {
    pub triggers: u64,
    pub events: u32,
    pub steps: u64,
    pub outcome: Outcome,
}

impl FaultRun {
    /// Triggered and at least one accident in the same run.
    pub fn found(&self) -> bool {
        self.triggers > 0 && self.events > 0
    }
}

/// One simulated map: its seeds, coverage cell and the seven fault runs in
/// `FaultId::ALL` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub candidate_index: u64,
    pub external_seed: u64,
    pub internal_seed: u64,
    pub cell: CoverageCell,
    pub runs: [FaultRun; FAULTS],
    /// Wall-clock seconds spent simulating the seven runs.
    pub seconds: f64,
}

impl MatrixRow {
    pub fn steps(&self) -> u64 {
        self.runs.iter().map(|r| r.steps).sum()
    }

    pub fn found_count(&self) -> usize {
        self.runs.iter().filter(|r| r.found()).count()
    }
}

/// Internal seed used for every run on the map with this external seed.
pub fn internal_seed_for(external_seed: u64) -> u64 {
    derive_seed(external_seed, StreamTag::InternalSeed, 0)
}

/// Runs the map once per catalogued fault, with only that fault enabled.
/// The runs execute in parallel; the result order is fixed.
pub fn evaluate_map(map: &WorldMap, template: &RunConfig) -> [FaultRun; FAULTS] {
    let runs: Vec<FaultRun> = FaultId::ALL
        .par_iter()
        .map(|f| {
            let config = RunConfig {
                fault_set: FaultSet::single(*f),
                record_trajectory: false,
                ..template.clone()
            };
            let r = run(map, &config);
            FaultRun {
                triggers: r.trigger_counts.get(f).copied().unwrap_or(0),
                events: r.events.len() as u32,
                steps: r.steps_executed,
                outcome: r.outcome,
            }
        })
        .collect();
    runs.try_into().expect("one run per fault")
}

/// Rows are maps, columns the seven faults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapFaultMatrix {
    pub rows: Vec<MatrixRow>,
}

impl MapFaultMatrix {
    pub fn found(&self, row: usize, fault: FaultId) -> bool {
        self.rows[row].runs[fault.index()].found()
    }

    /// CSV: `map,external_seed,internal_seed,cell` then `f<id>_found`,
    /// `f<id>_triggers`, `f<id>_events`, `f<id>_steps` per fault.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("map,external_seed,internal_seed,cell");
        for f in FaultId::ALL {
            let _ = write!(s, ",f{f}_found,f{f}_triggers,f{f}_events,f{f}_steps");
        }
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(s, "{i},{},{},{}", r.external_seed, r.internal_seed, r.cell);
            for run in &r.runs {
                let _ = write!(
                    s,
                    ",{},{},{},{}",
                    run.found() as u8,
                    run.triggers,
                    run.events,
                    run.steps
                );
            }
            s.push('\n');
        }
        s
    }
}

/// Share of the seven faults found on at least one map. 0 for an empty matrix.
pub fn method_prop_fault(m: &MapFaultMatrix) -> f64 {
    let found = FaultId::ALL
        .iter()
        .filter(|f| (0..m.rows.len()).any(|r| m.found(r, **f)))
        .count();
    found as f64 / FAULTS as f64
}

/// Share of maps that found all seven faults. 0 for an empty matrix.
pub fn prop_map_all_fault(m: &MapFaultMatrix) -> f64 {
    if m.rows.is_empty() {
        return 0.0;
    }
    m.rows.iter().filter(|r| r.found_count() == FAULTS).count() as f64 / m.rows.len() as f64
}

/// Mean number of faults found per map. 0 for an empty matrix.
pub fn avg_map_fault(m: &MapFaultMatrix) -> f64 {
    if m.rows.is_empty() {
        return 0.0;
    }
    m.rows.iter().map(|r| r.found_count()).sum::<usize>() as f64 / m.rows.len() as f64
}

/// Per fault, the share of its runs that found it.
pub fn per_fault_rates(m: &MapFaultMatrix) -> [f64; FAULTS] {
    std::array::from_fn(|i| {
        if m.rows.is_empty() {
            0.0
        } else {
            m.rows.iter().filter(|r| r.runs[i].found()).count() as f64 / m.rows.len() as f64
        }
    })
}

/// Share of all (map, fault) runs whose fault was found.
pub fn found_run_fraction(m: &MapFaultMatrix) -> f64 {
    if m.rows.is_empty() {
        return 0.0;
    }
    m.rows.iter().map(|r| r.found_count()).sum::<usize>() as f64 / (m.rows.len() * FAULTS) as f64
}

fn mean_rates(ms: &[&MapFaultMatrix]) -> [f64; FAULTS] {
    let mut acc = [0.0; FAULTS];
    for m in ms {
        for (a, r) in acc.iter_mut().zip(per_fault_rates(m)) {
            *a += r;
        }
    }
    acc.map(|a| {
        if ms.is_empty() {
            0.0
        } else {
            a / ms.len() as f64
        }
    })
}

/// Per fault, percentage points by which the coverage method's find rate
/// exceeds the random method's, each averaged over its replications.
pub fn per_fault_rate_difference(
    coverage: &[&MapFaultMatrix],
    random: &[&MapFaultMatrix],
) -> [f64; FAULTS] {
    let (c, r) = (mean_rates(coverage), mean_rates(random));
    std::array::from_fn(|i| 100.0 * (c[i] - r[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares. `r_squared` is 0 when all `y` are equal.
pub fn linear_regression(points: &[(f64, f64)]) -> Result<RegressionFit, ExperimentError> {
    if points.len() < 2 {
        return Err(ExperimentError::DegenerateInput("need at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::DegenerateInput("all x values are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Metrics of one campaign, stored next to the matrix they derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub replication: u32,
    pub master_seed: u64,
    pub candidates_examined: u64,
    pub accepted: u64,
    pub discarded: u64,
    pub coverage_fraction: f64,
    pub method_prop_fault: f64,
    pub prop_map_all_fault: f64,
    pub avg_map_fault: f64,
    pub per_fault_rates: [f64; FAULTS],
    pub found_run_fraction: f64,
    pub coverage_curve: Vec<(u64, f64)>,
    pub steps_spent: u64,
    pub wall_seconds: f64,
    pub matrix: MapFaultMatrix,
}

impl ExperimentReport {
    pub fn from_campaign(c: &CampaignResult, replication: u32) -> Self {
        let matrix = MapFaultMatrix {
            rows: c.maps.clone(),
        };
        Self {
            method: c.method,
            replication,
            master_seed: c.master_seed,
            candidates_examined: c.candidates.len() as u64,
            accepted: c.maps.len() as u64,
            discarded: c.discarded_count,
            coverage_fraction: c.tracker.coverage_fraction(),
            method_prop_fault: method_prop_fault(&matrix),
            prop_map_all_fault: prop_map_all_fault(&matrix),
            avg_map_fault: avg_map_fault(&matrix),
            per_fault_rates: per_fault_rates(&matrix),
            found_run_fraction: found_run_fraction(&matrix),
            coverage_curve: c.coverage_curve.clone(),
            steps_spent: c.steps_spent,
            wall_seconds: c.wall_seconds,
            matrix,
        }
    }

    /// Checks every stored metric against a recomputation from the matrix.
    pub fn verify(&self) -> Result<(), ExperimentError> {
        let m = &self.matrix;
        let mut checks = vec![
            (
                "method_prop_fault",
                self.method_prop_fault,
                method_prop_fault(m),
            ),
            (
                "prop_map_all_fault",
                self.prop_map_all_fault,
                prop_map_all_fault(m),
            ),
            ("avg_map_fault", self.avg_map_fault, avg_map_fault(m)),
            (
                "found_run_fraction",
                self.found_run_fraction,
                found_run_fraction(m),
            ),
            ("accepted", self.accepted as f64, m.rows.len() as f64),
            (
                "steps_spent",
                self.steps_spent as f64,
                m.rows.iter().map(MatrixRow::steps).sum::<u64>() as f64,
            ),
        ];
        for (stored, re) in self.per_fault_rates.iter().zip(per_fault_rates(m)) {
            checks.push(("per_fault_rates", *stored, re));
        }
        for (field, stored, recomputed) in checks {
            if stored != recomputed {
                return Err(ExperimentError::Integrity {
                    field,
                    stored,
                    recomputed,
                });
            }
        }
        Ok(())
    }

    /// `method,replication,candidates,coverage_fraction`.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("method,replication,candidates,coverage_fraction\n");
        for (c, f) in &self.coverage_curve {
            let _ = writeln!(s, "{},{},{c},{f}", self.method.name(), self.replication);
        }
        s
    }

    /// One-row metrics header plus values.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(
            "method,replication,candidates,accepted,discarded,coverage_fraction,method_prop_fault,prop_map_all_fault,avg_map_fault,found_run_fraction,steps_spent,wall_seconds",
        );
        for f in FaultId::ALL {
            let _ = write!(s, ",rate_f{f}");
        }
        let _ = write!(
            s,
            "\n{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.replication,
            self.candidates_examined,
            self.accepted,
            self.discarded,
            self.coverage_fraction,
            self.method_prop_fault,
            self.prop_map_all_fault,
            self.avg_map_fault,
            self.found_run_fraction,
            self.steps_spent,
            self.wall_seconds
        );
        for r in self.per_fault_rates {
            let _ = write!(s, ",{r}");
        }
        s.push('\n');
        s
    }
}

/// One replication: the coverage campaign and the random campaign given the
/// same budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationPair {
    pub coverage: CampaignResult,
    pub random: CampaignResult,
}

/// Master seed of replication `r`'s coverage campaign.
pub fn replication_seed(master: u64, r: u32) -> u64 {
    derive_seed(master, StreamTag::Replication, r as u64)
}

/// Master seed of replication `r`'s random campaign.
pub fn random_replication_seed(master: u64, r: u32) -> u64 {
    derive_seed(master, StreamTag::RandomReplication, r as u64)
}

/// Runs `n` replications of a coverage campaign, each followed by a random
/// campaign matched to its spend. `config` must describe the coverage
/// campaign.
pub fn replicate(config: &CampaignConfig, n: u32) -> Result<Vec<ReplicationPair>, ExperimentError> {
    (0..n).map(|r| replicate_one(config, r)).collect()
}

pub fn replicate_one(config: &CampaignConfig, r: u32) -> Result<ReplicationPair, ExperimentError> {
    let cov_cfg = CampaignConfig {
        method: Method::CoverageDriven,
        master_seed: replication_seed(config.master_seed, r),
        ..config.clone()
    };
    let coverage = coverage_campaign(&cov_cfg)?;
    let random = matched_random(config, &coverage, r)?;
    Ok(ReplicationPair { coverage, random })
}

/// The random campaign of replication `r`, at the spend of `reference`.
pub fn matched_random(
    config: &CampaignConfig,
    reference: &CampaignResult,
    r: u32,
) -> Result<CampaignResult, ExperimentError> {
    let mode = config.budget.map(|b| b.mode).unwrap_or_default();
    let rnd_cfg = CampaignConfig {
        method: Method::Random,
        master_seed: random_replication_seed(config.master_seed, r),
        budget: Some(budget_match(reference, mode)),
        ..config.clone()
    };
    Ok(random_campaign(&rnd_cfg)?)
}

/// Scatter of (coverage fraction, % of runs whose fault was found), one
/// point per report, with its least-squares fit.
pub fn coverage_fault_scatter(
    reports: &[&ExperimentReport],
) -> Result<(Vec<(f64, f64)>, RegressionFit), ExperimentError> {
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| (r.coverage_fraction, 100.0 * r.found_run_fraction))
        .collect();
    let fit = linear_regression(&pts)?;
    Ok((pts, fit))
}

/// Coverage campaigns at several candidate limits for `sets` independent
/// master seeds. Each set runs once at the largest limit; the smaller
/// limits are its prefixes, which is exactly what a separate run at that
/// limit would produce.
pub fn effort_sweep(
    config: &CampaignConfig,
    levels: &[u64],
    sets: u32,
) -> Result<Vec<ExperimentReport>, ExperimentError> {
    let Some(&max) = levels.iter().max() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for k in 0..sets {
        let cfg = CampaignConfig {
            method: Method::CoverageDriven,
            master_seed: derive_seed(config.master_seed, StreamTag::SweepSet, k as u64),
            candidate_limit: max,
            ..config.clone()
        };
        out.extend(prefix_reports(&coverage_campaign(&cfg)?, levels, k));
    }
    Ok(out)
}

/// Reports for the first `l` candidates of `campaign`, for each `l` in
/// `levels` not above its candidate limit.
pub fn prefix_reports(
    campaign: &CampaignResult,
    levels: &[u64],
    replication: u32,
) -> Vec<ExperimentReport> {
    levels
        .iter()
        .filter(|l| **l <= campaign.config.candidate_limit)
        .map(|l| ExperimentReport::from_campaign(&campaign.truncated(*l), replication))
        .collect()
}

/// Plain-text summary of paired replications.
pub fn summary(pairs: &[(&ExperimentReport, &ExperimentReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Table-2 rates count a fault as found per run: triggered and at least one accident in that run.");
    let _ = writeln!(
        s,
        "{:<4} {:<8} {:>6} {:>9} {:>9} {:>10} {:>10} {:>10}",
        "rep", "method", "maps", "coverage", "prop", "prop_all", "avg_found", "steps"
    );
    for (c, r) in pairs {
        for rep in [c, r] {
            let _ = writeln!(
                s,
                "{:<4} {:<8} {:>6} {:>9.4} {:>9.4} {:>10.4} {:>10.4} {:>10}",
                rep.replication,
                rep.method.name(),
                rep.accepted,
                rep.coverage_fraction,
                rep.method_prop_fault,
                rep.prop_map_all_fault,
                rep.avg_map_fault,
                rep.steps_spent
            );
        }
    }
    let cov: Vec<&MapFaultMatrix> = pairs.iter().map(|p| &p.0.matrix).collect();
    let rnd: Vec<&MapFaultMatrix> = pairs.iter().map(|p| &p.1.matrix).collect();
    let mean = |f: fn(&ExperimentReport) -> f64, coverage: bool| {
        if pairs.is_empty() {
            return 0.0;
        }
        pairs
            .iter()
            .map(|p| f(if coverage { p.0 } else { p.1 }))
            .sum::<f64>()
            / pairs.len() as f64
    };
    for (name, f) in [
        (
            "coverage_fraction",
            (|r: &ExperimentReport| r.coverage_fraction) as fn(&ExperimentReport) -> f64,
        ),
        ("method_prop_fault", |r| r.method_prop_fault),
        ("prop_map_all_fault", |r| r.prop_map_all_fault),
        ("avg_map_fault", |r| r.avg_map_fault),
        ("found_run_fraction", |r| r.found_run_fraction),
    ] {
        let _ = writeln!(
            s,
            "mean {name}: coverage {:.4} random {:.4}",
            mean(f, true),
            mean(f, false)
        );
    }
    let diff = per_fault_rate_difference(&cov, &rnd);
    let (cr, rr) = (mean_rates(&cov), mean_rates(&rnd));
    let _ = writeln!(s, "fault  coverage_rate  random_rate  difference_pp");
    for (i, f) in FaultId::ALL.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<6} {:>13.4} {:>12.4} {:>14.2}",
            f, cr[i], rr[i], diff[i]
        );
    }
    s
}

/// Table-2 CSV: one header row of fault ids and one row of percentage-point
/// differences.
pub fn table2_csv(diff: &[f64; FAULTS]) -> String {
    let ids: Vec<String> = FaultId::ALL.iter().map(|f| format!("f{f}")).collect();
    let vals: Vec<String> = diff.iter().map(|d| d.to_string()).collect();
    format!("{}\n{}\n", ids.join(","), vals.join(","))
}

/// Fig-2 CSV: `method,replication,map,faults_found`.
pub fn fig2_csv(reports: &[&ExperimentReport]) -> String {
    let mut s = String::from("method,replication,map,faults_found\n");
    for r in reports {
        for (i, row) in r.matrix.rows.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{i},{}",
                r.method.name(),
                r.replication,
                row.found_count()
            );
        }
    }
    s
}

/// Fig-3 CSV: the coverage curves of all reports.
pub fn fig3_csv(reports: &[&ExperimentReport]) -> String {
    let mut s = String::from("method,replication,candidates,coverage_fraction\n");
    for r in reports {
        for line in r.curve_csv().lines().skip(1) {
            s.push_str(line);
            s.push('\n');
        }
    }
    s
}

/// Fig-4 CSV: fit parameters as `#` comments, then
/// `coverage_fraction,found_run_percent`.
pub fn fig4_csv(points: &[(f64, f64)], fit: &RegressionFit) -> String {
    let mut s = format!(
        "# slope={}\n# intercept={}\n# r_squared={}\ncoverage_fraction,found_run_percent\n",
        fit.slope, fit.intercept, fit.r_squared
    );
    for (x, y) in points {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_with(found: bool) -> FaultRun {
        FaultRun {
            triggers: found as u64,
            events: 1,
            steps: 10,
            outcome: Outcome::TargetReached,
        }
    }

    fn row(found: [bool; FAULTS]) -> MatrixRow {
        MatrixRow {
            candidate_index: 0,
            external_seed: 0,
            internal_seed: 0,
            cell: CoverageCell::new([0, 0, 0]),
            runs: found.map(run_with),
            seconds: 0.0,
        }
    }

    fn first_k(k: usize) -> [bool; FAULTS] {
        std::array::from_fn(|i| i < k)
    }

    #[test]
    fn found_needs_trigger_and_event() {
        let mk = |triggers, events| FaultRun {
            triggers,
            events,
            steps: 1,
            outcome: Outcome::Timeout,
        };
        assert!(mk(1, 1).found());
        assert!(!mk(1, 0).found());
        assert!(!mk(0, 1).found());
    }

    #[test]
    fn measures_on_fixture() {
        let m = MapFaultMatrix {
            rows: vec![row(first_k(2)), row(first_k(5)), row(first_k(7))],
        };
        assert_eq!(avg_map_fault(&m), 14.0 / 3.0);
        assert_eq!(method_prop_fault(&m), 1.0);
        assert_eq!(prop_map_all_fault(&m), 1.0 / 3.0);
        let only3 = MapFaultMatrix {
            rows: vec![row(first_k(3))],
        };
        assert_eq!(method_prop_fault(&only3), 3.0 / 7.0);
        let none = MapFaultMatrix {
            rows: vec![row(first_k(0))],
        };
        assert_eq!(method_prop_fault(&none), 0.0);
        assert_eq!(prop_map_all_fault(&none), 0.0);
        let mut ten: Vec<MatrixRow> = (0..8).map(|_| row(first_k(4))).collect();
        ten.extend((0..2).map(|_| row(first_k(7))));
        assert_eq!(prop_map_all_fault(&MapFaultMatrix { rows: ten }), 0.2);
    }

    #[test]
    fn rate_difference_on_fixture() {
        // Coverage: 2 replications with rates for fault 2 of 1/2 and 1/1.
        let c1 = MapFaultMatrix {
            rows: vec![row(first_k(1)), row(first_k(0))],
        };
        let c2 = MapFaultMatrix {
            rows: vec![row(first_k(7))],
        };
        let r1 = MapFaultMatrix {
            rows: vec![
                row(first_k(0)),
                row(first_k(0)),
                row(first_k(7)),
                row(first_k(6)),
            ],
        };
        let d = per_fault_rate_difference(&[&c1, &c2], &[&r1]);
        // f2: mean(0.5, 1.0) - 0.5 = 0.25; f18: mean(0, 1) - 0.25 = 0.25;
        // f17: mean(0, 1) - 0.5 = 0.
        assert!((d[0] - 25.0).abs() < 1e-12);
        assert!((d[6] - 25.0).abs() < 1e-12);
        assert!(d[5].abs() < 1e-12);
        assert_eq!(per_fault_rate_difference(&[&c1], &[&c1]), [0.0; FAULTS]);
    }

    #[test]
    fn regression_exact_and_degenerate() {
        let f = linear_regression(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
        assert_eq!(
            linear_regression(&[(0.0, 4.0), (1.0, 4.0)])
                .unwrap()
                .r_squared,
            0.0
        );
        assert!(matches!(
            linear_regression(&[(1.0, 2.0)]),
            Err(ExperimentError::DegenerateInput(_))
        ));
        assert!(matches!(
            linear_regression(&[(1.0, 2.0), (1.0, 3.0)]),
            Err(ExperimentError::DegenerateInput(_))
        ));
    }

    #[test]
    fn report_verification_catches_tampering() {
        let m = MapFaultMatrix {
            rows: vec![row(first_k(2)), row(first_k(7))],
        };
        let mut rep = ExperimentReport {
            method: Method::Random,
            replication: 0,
            master_seed: 0,
            candidates_examined: 2,
            accepted: 2,
            discarded: 0,
            coverage_fraction: 1.0 / 216.0,
            method_prop_fault: method_prop_fault(&m),
            prop_map_all_fault: prop_map_all_fault(&m),
            avg_map_fault: avg_map_fault(&m),
            per_fault_rates: per_fault_rates(&m),
            found_run_fraction: found_run_fraction(&m),
            coverage_curve: vec![(1, 1.0 / 216.0), (2, 1.0 / 216.0)],
            steps_spent: 140,
            wall_seconds: 0.0,
            matrix: m,
        };
        assert_eq!(rep.verify(), Ok(()));
        rep.avg_map_fault = 5.0;
        assert!(matches!(
            rep.verify(),
            Err(ExperimentError::Integrity {
                field: "avg_map_fault",
                ..
            })
        ));
    }

    #[test]
    fn csv_shapes() {
        let m = MapFaultMatrix {
            rows: vec![row(first_k(2))],
        };
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().next().unwrap().split(',').count(),
            4 + 4 * FAULTS
        );
        let t2 = table2_csv(&[16.0; FAULTS]);
        assert_eq!(t2.lines().next().unwrap(), "f2,f4,f8,f10,f12,f17,f18");
        assert_eq!(t2.lines().nth(1).unwrap().split(',').count(), FAULTS);
        let fit = RegressionFit {
            slope: 1.0,
            intercept: 0.0,
            r_squared: 0.5,
        };
        assert!(fig4_csv(&[(0.1, 2.0)], &fit).starts_with("# slope=1\n"));
    }

    fn small_config() -> CampaignConfig {
        let mut c = CampaignConfig::new(Method::CoverageDriven, 11);
        c.gen_config.junction_count_range = [4, 5];
        c.gen_config.parked_range = [0, 2];
        c.gen_config.moving_range = [0, 1];
        c.run_config.max_steps = 300;
        c.candidate_limit = 6;
        c
    }

    #[test]
    fn replicate_pairs_and_determinism() {
        let cfg = small_config();
        let a = replicate(&cfg, 1).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].coverage.method, Method::CoverageDriven);
        assert_eq!(a[0].random.method, Method::Random);
        assert_eq!(
            a[0].random.config.budget.unwrap().amount,
            a[0].coverage.steps_spent as f64
        );
        let b = replicate(&cfg, 1).unwrap();
        let strip = |p: &ReplicationPair| (p.coverage.without_timing(), p.random.without_timing());
        assert_eq!(strip(&a[0]), strip(&b[0]));
        for c in [&a[0].coverage, &a[0].random] {
            ExperimentReport::from_campaign(c, 0).verify().unwrap();
        }
    }

    #[test]
    fn sweep_levels_are_prefixes() {
        let reps = effort_sweep(&small_config(), &[3, 6], 2).unwrap();
        assert_eq!(reps.len(), 4);
        for pair in reps.chunks(2) {
            assert_eq!(pair[0].candidates_examined, 3);
            assert!(pair[0].coverage_fraction <= pair[1].coverage_fraction);
            assert!(pair[0]
                .matrix
                .rows
                .iter()
                .all(|r| pair[1].matrix.rows.contains(r)));
        }
        let refs: Vec<&ExperimentReport> = reps.iter().collect();
        let (pts, fit) = coverage_fault_scatter(&refs).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(fit, linear_regression(&pts).unwrap());
    }

    proptest! {
        #[test]
        fn measure_invariants(rows in proptest::collection::vec(proptest::array::uniform7(any::<bool>()), 1..30)) {
            let m = MapFaultMatrix { rows: rows.iter().map(|r| row(*r)).collect() };
            let avg = avg_map_fault(&m);
            let all = prop_map_all_fault(&m);
            prop_assert!((0.0..=7.0).contains(&avg));
            if all > 0.0 {
                prop_assert_eq!(method_prop_fault(&m), 1.0);
            }
            prop_assert_eq!(avg == 7.0, all == 1.0);
            let mut rev = m.clone();
            rev.rows.reverse();
            prop_assert_eq!(avg_map_fault(&rev), avg);
            prop_assert_eq!(method_prop_fault(&rev), method_prop_fault(&m));
        }

        #[test]
        fn regression_r2_in_unit_interval(pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..100.0), 2..40)) {
            if let Ok(f) = linear_regression(&pts) {
                prop_assert!((0.0..=1.0).contains(&f.r_squared));
            }
        }
    }
}
