//! Layered configuration: built-in defaults, then an optional TOML file,
//! then command-line flags.

use crate::CliError;
use serde::{Deserialize, Serialize};
use sitcov::coverage::CriteriaBounds;
use sitcov::mapgen::GenConfig;
use sitcov::sim::RunConfig;
use sitcov::testgen::BudgetMode;
use std::path::Path;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "SITCOV_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub master_seed: u64,
    pub candidates: u64,
    pub replications: u32,
    pub budget_mode: BudgetMode,
    /// Candidate counts used as effort levels by the fig4 report.
    pub levels: Vec<u64>,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            master_seed: 1,
            candidates: 2_000,
            replications: 5,
            budget_mode: BudgetMode::SimulationSteps,
            levels: vec![200, 500, 1_000, 1_500, 2_000],
        }
    }
}

/// Every knob a command may read. Sections missing from the file keep their
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub gen: GenConfig,
    pub run: RunConfig,
    /// Criteria bounds; derived from the generator's map bounds when absent.
    pub bounds: Option<CriteriaBounds>,
    pub campaign: CampaignSection,
}

impl CliConfig {
    /// Defaults overlaid with `path`, or with the file named by
    /// [`CONFIG_ENV`] when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty());
        let path = path.map(Path::to_path_buf).or(from_env.map(Into::into));
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn bounds(&self) -> CriteriaBounds {
        self.bounds.unwrap_or_else(|| {
            let b = self.gen.bounds();
            CriteriaBounds::for_diagonal(b.width().hypot(b.height()))
        })
    }

    /// Checks every section after all layers are applied.
    pub fn validate(&self) -> Result<(), CliError> {
        self.gen
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.run
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.bounds()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.campaign.candidates < 1 || self.campaign.replications < 1 {
            return Err(CliError::Usage(
                "campaign candidates and replications must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The resolved config as one JSON document, with bounds filled in.
    pub fn resolved_json(&self) -> String {
        let mut c = self.clone();
        c.bounds = Some(self.bounds());
        serde_json::to_string_pretty(&c).expect("config serialises")
    }
}

/// Parses `WxH`, e.g. `500x500`.
pub fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad dimension {v:?}"))
    };
    Ok((num(w)?, num(h)?))
}
