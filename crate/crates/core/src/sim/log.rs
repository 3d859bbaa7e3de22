//! Line-oriented run log.
//!
//! ```text
//! sitcov-run-log 1
//! external_seed <u64>
//! map_digest <hex>
//! internal_seed <u64>
//! faults <ids or none>
//! dt <f64>
//! max_steps <u64>
//! config_digest <hex>
//! event <step> <KIND> <x> <y> <counterpart or none>
//! trigger <fault> <count>
//! outcome <TargetReached|Timeout> <steps>
//! ```
//!
//! Events come in step order, triggers in fault order; exactly one outcome
//! line ends the log. Floats use the shortest round-trip decimal form.

use super::{AccidentEvent, AccidentKind, Counterpart, MapRef, Outcome, RunResult};
use crate::geom::Point;
use crate::sut::{FaultId, FaultSet};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

const MAGIC: &str = "sitcov-run-log 1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub map_ref: MapRef,
    pub internal_seed: u64,
    pub faults: FaultSet,
    pub dt: f64,
    pub max_steps: u64,
    pub config_digest: String,
    pub events: Vec<AccidentEvent>,
    pub triggers: BTreeMap<FaultId, u64>,
    pub outcome: Outcome,
    pub steps_executed: u64,
}

impl RunLog {
    pub fn from_result(r: &RunResult) -> Self {
        Self {
            map_ref: r.map_ref.clone(),
            internal_seed: r.config.internal_seed,
            faults: r.config.fault_set.clone(),
            dt: r.config.dt,
            max_steps: r.config.max_steps,
            config_digest: r.config.digest(),
            events: r.events.clone(),
            triggers: r.trigger_counts.clone(),
            outcome: r.outcome,
            steps_executed: r.steps_executed,
        }
    }

    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "external_seed {}", self.map_ref.external_seed);
        let _ = writeln!(s, "map_digest {}", self.map_ref.digest);
        let _ = writeln!(s, "internal_seed {}", self.internal_seed);
        let _ = writeln!(s, "faults {}", self.faults);
        let _ = writeln!(s, "dt {}", self.dt);
        let _ = writeln!(s, "max_steps {}", self.max_steps);
        let _ = writeln!(s, "config_digest {}", self.config_digest);
        for e in &self.events {
            let cp = e
                .counterpart
                .map_or_else(|| "none".to_string(), |c| c.to_string());
            let _ = writeln!(
                s,
                "event {} {} {} {} {}",
                e.step, e.kind, e.position.x, e.position.y, cp
            );
        }
        for (f, n) in &self.triggers {
            let _ = writeln!(s, "trigger {f} {n}");
        }
        let _ = writeln!(s, "outcome {} {}", self.outcome.name(), self.steps_executed);
        s
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, msg: String| LogError::Parse { line, msg };
        let mut next = |key: &str| -> Result<(usize, String), LogError> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing {key}")))?;
            let rest = l.strip_prefix(key).and_then(|r| r.strip_prefix(' '));
            rest.map(|r| (n, r.to_string()))
                .ok_or_else(|| err(n, format!("expected {key}")))
        };
        fn num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T, LogError> {
            s.parse().map_err(|_| LogError::Parse {
                line: n,
                msg: format!("bad number {s:?}"),
            })
        }

        let (n, v) = next("sitcov-run-log")?;
        if v != "1" {
            return Err(err(n, format!("unsupported version {v}")));
        }
        let (n, v) = next("external_seed")?;
        let external_seed = num(n, &v)?;
        let (_, digest) = next("map_digest")?;
        let (n, v) = next("internal_seed")?;
        let internal_seed = num(n, &v)?;
        let (n, v) = next("faults")?;
        let faults: FaultSet = v
            .parse()
            .map_err(|e: crate::sut::UnknownFault| err(n, e.to_string()))?;
        let (n, v) = next("dt")?;
        let dt = num(n, &v)?;
        let (n, v) = next("max_steps")?;
        let max_steps = num(n, &v)?;
        let (_, config_digest) = next("config_digest")?;

        let mut events = Vec::new();
        let mut triggers = BTreeMap::new();
        let mut outcome = None;
        for (n, l) in text.lines().enumerate().skip(8).map(|(i, l)| (i + 1, l)) {
            if outcome.is_some() {
                return Err(err(n, "content after outcome".into()));
            }
            let f: Vec<&str> = l.split(' ').collect();
            match f.as_slice() {
                ["event", step, kind, x, y, cp] => events.push(AccidentEvent {
                    step: num(n, step)?,
                    kind: kind.parse::<AccidentKind>().map_err(|m| err(n, m))?,
                    position: Point::new(num(n, x)?, num(n, y)?),
                    counterpart: match *cp {
                        "none" => None,
                        c => Some(c.parse::<Counterpart>().map_err(|m| err(n, m))?),
                    },
                }),
                ["trigger", id, count] => {
                    let id: FaultId = id
                        .parse()
                        .map_err(|e: crate::sut::UnknownFault| err(n, e.to_string()))?;
                    triggers.insert(id, num(n, count)?);
                }
                ["outcome", o, steps] => {
                    let o = match *o {
                        "TargetReached" => Outcome::TargetReached,
                        "Timeout" => Outcome::Timeout,
                        other => return Err(err(n, format!("unknown outcome {other}"))),
                    };
                    outcome = Some((o, num(n, steps)?));
                }
                _ => return Err(err(n, format!("unrecognised record {l:?}"))),
            }
        }
        let (outcome, steps_executed) = outcome.ok_or_else(|| err(0, "missing outcome".into()))?;
        Ok(Self {
            map_ref: MapRef {
                external_seed,
                digest,
            },
            internal_seed,
            faults,
            dt,
            max_steps,
            config_digest,
            events,
            triggers,
            outcome,
            steps_executed,
        })
    }

    /// One-line human summary: outcome, events by kind, triggers by fault.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "outcome={} steps={}",
            self.outcome.name(),
            self.steps_executed
        );
        for k in AccidentKind::ALL {
            let n = self.events.iter().filter(|e| e.kind == k).count();
            let _ = write!(s, " {k}={n}");
        }
        for (f, n) in &self.triggers {
            let _ = write!(s, " trigger{f}={n}");
        }
        s
    }
}
