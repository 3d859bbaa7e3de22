//! `sitcov` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 map
//! generation failure. Accidents in a run are data and never change the
//! exit code.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Generation(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Generation(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sitcov",
    version,
    about = "Road-world simulator and situation-coverage campaign runner"
)]
pub struct Cli {
    /// TOML config file. Defaults to the file named by SITCOV_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel runs (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one map and write it as JSON.
    GenMap(GenMapArgs),
    /// Simulate one run and write its log.
    Run(RunArgs),
    /// Run coverage-driven and/or random campaigns.
    Campaign(CampaignArgs),
    /// Turn campaign outputs into figure-ready CSV.
    Report(ReportArgs),
    /// Inspect the seeded-fault catalogue.
    Faults {
        #[command(subcommand)]
        command: FaultsCommand,
    },
}

#[derive(Debug, Args)]
pub struct GenMapArgs {
    #[arg(long)]
    pub external_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Map bounds as WxH in metres.
    #[arg(long)]
    pub bounds: Option<String>,
    /// Minimum junction separation in metres.
    #[arg(long)]
    pub separation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Map file written by gen-map.
    #[arg(
        long,
        conflicts_with = "external_seed",
        required_unless_present = "external_seed"
    )]
    pub map: Option<PathBuf>,
    /// Generate the map from this seed instead of reading a file.
    #[arg(long)]
    pub external_seed: Option<u64>,
    #[arg(long)]
    pub internal_seed: Option<u64>,
    /// Enable a seeded fault; repeatable.
    #[arg(long = "fault")]
    pub faults: Vec<u8>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Run log destination; stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write the trajectory as CSV.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Write the map and trajectory as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Coverage,
    Random,
    /// Coverage campaigns each followed by a matched random campaign.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetModeArg {
    Steps,
    WallClock,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Candidates per coverage campaign.
    #[arg(long)]
    pub candidates: Option<u64>,
    /// Use 20,000 candidates unless --candidates is given.
    #[arg(long)]
    pub full_scale: bool,
    /// Match the spend of the campaign in this manifest (random method).
    #[arg(long = "match")]
    pub match_manifest: Option<PathBuf>,
    /// Explicit step budget for the random method.
    #[arg(long)]
    pub budget_steps: Option<u64>,
    #[arg(long, value_enum)]
    pub budget_mode: Option<BudgetModeArg>,
    #[arg(long)]
    pub replications: Option<u32>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Table2,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub in_dir: PathBuf,
    #[arg(long, value_enum)]
    pub figure: Figure,
    /// Destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FaultsCommand {
    /// List id, description and hook site of every fault.
    List {
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
