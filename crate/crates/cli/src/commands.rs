use crate::config::{parse_bounds, CliConfig};
use crate::{
    BudgetModeArg, CampaignArgs, Cli, CliError, Command, FaultsCommand, Figure, GenMapArgs,
    MethodArg, ReportArgs, RunArgs,
};
use sitcov::experiment::{
    self, fig2_csv, fig3_csv, fig4_csv, per_fault_rate_difference, prefix_reports, table2_csv,
    ExperimentReport, MapFaultMatrix,
};
use sitcov::mapgen::{generate_map, GenError};
use sitcov::sim::{run, scene_svg, trajectory_csv, RunConfig};
use sitcov::sut::{catalogue, FaultId, FaultSet};
use sitcov::testgen::{
    budget_match, coverage_campaign, random_campaign, Budget, BudgetMode, CampaignConfig,
    CampaignResult, Manifest, Method,
};
use sitcov::world::WorldMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let config = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenMap(a) => gen_map(config, a),
        Command::Run(a) => run_cmd(config, a),
        Command::Campaign(a) => campaign(config, a),
        Command::Report(a) => report(config, a),
        Command::Faults {
            command: FaultsCommand::List { json },
        } => faults_list(json),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn gen_error(e: GenError) -> CliError {
    match e {
        GenError::InvalidConfig(m) => CliError::Usage(m),
        e @ GenError::GenerationFailed { .. } => CliError::Generation(e.to_string()),
    }
}

/// Single-file commands echo the resolved config on stderr.
fn echo_config(config: &CliConfig) {
    let v: serde_json::Value = serde_json::from_str(&config.resolved_json()).expect("valid json");
    eprintln!("resolved-config {v}");
}

fn gen_map(mut config: CliConfig, a: GenMapArgs) -> Result<(), CliError> {
    if let Some(b) = &a.bounds {
        let (w, h) = parse_bounds(b).map_err(CliError::Usage)?;
        config.gen.bounds_width = w;
        config.gen.bounds_height = h;
    }
    if let Some(s) = a.separation {
        config.gen.min_junction_separation = s;
    }
    config.validate()?;
    echo_config(&config);
    let map = generate_map(a.external_seed, &config.gen).map_err(gen_error)?;
    write(&a.out, &map.to_json())
}

fn run_cmd(mut config: CliConfig, a: RunArgs) -> Result<(), CliError> {
    if let Some(s) = a.internal_seed {
        config.run.internal_seed = s;
    }
    if let Some(m) = a.max_steps {
        config.run.max_steps = m;
    }
    if !a.faults.is_empty() {
        let mut set = FaultSet::nominal();
        for f in &a.faults {
            set.insert(FaultId::new(*f).map_err(|e| CliError::Usage(e.to_string()))?);
        }
        config.run.fault_set = set;
    }
    config.run.record_trajectory = a.trajectory.is_some() || a.svg.is_some();
    config.validate()?;
    echo_config(&config);
    let map = match (&a.map, a.external_seed) {
        (Some(p), _) => WorldMap::from_json(&read(p)?)
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        (None, Some(seed)) => generate_map(seed, &config.gen).map_err(gen_error)?,
        (None, None) => unreachable!("clap requires one of --map and --external-seed"),
    };
    let result = run(&map, &config.run);
    let log = result.log();
    let trajectory = result.trajectory.as_deref().unwrap_or_default();
    match &a.log {
        Some(p) => write(p, &log.emit())?,
        None => print!("{}", log.emit()),
    }
    if let Some(p) = &a.trajectory {
        write(p, &trajectory_csv(trajectory))?;
    }
    if let Some(p) = &a.svg {
        write(p, &scene_svg(&map, Some(trajectory)))?;
    }
    eprintln!("{}", log.summary());
    Ok(())
}

fn campaign(mut config: CliConfig, a: CampaignArgs) -> Result<(), CliError> {
    if a.full_scale {
        config.campaign.candidates = 20_000;
    }
    if let Some(c) = a.candidates {
        config.campaign.candidates = c;
    }
    if let Some(r) = a.replications {
        config.campaign.replications = r;
    }
    if let Some(s) = a.master_seed {
        config.campaign.master_seed = s;
    }
    if let Some(m) = a.budget_mode {
        config.campaign.budget_mode = match m {
            BudgetModeArg::Steps => BudgetMode::SimulationSteps,
            BudgetModeArg::WallClock => BudgetMode::WallClockSeconds,
        };
    }
    config.validate()?;
    let fixed_budget = match (a.method, &a.match_manifest, a.budget_steps) {
        (MethodArg::Random, Some(p), None) => {
            let m = Manifest::from_json(&read(p)?)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Some(budget_match(&m.result, config.campaign.budget_mode))
        }
        (MethodArg::Random, None, Some(0)) => {
            return Err(CliError::Usage("--budget-steps must be positive".into()))
        }
        (MethodArg::Random, None, Some(n)) => Some(Budget::steps(n)),
        (MethodArg::Random, _, _) => {
            return Err(CliError::Usage(
                "random method needs exactly one of --match and --budget-steps".into(),
            ))
        }
        (_, None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "--match and --budget-steps apply to the random method only".into(),
            ))
        }
    };

    let base = CampaignConfig {
        method: Method::CoverageDriven,
        master_seed: config.campaign.master_seed,
        candidate_limit: config.campaign.candidates,
        budget: None,
        gen_config: config.gen.clone(),
        run_config: RunConfig {
            record_trajectory: false,
            ..config.run.clone()
        },
        bounds: config.bounds(),
    };
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.out_dir.display())))?;
    write(
        &a.out_dir.join("resolved_config.json"),
        &config.resolved_json(),
    )?;

    let mut pairs: Vec<(Option<ExperimentReport>, Option<ExperimentReport>)> = Vec::new();
    for r in 0..config.campaign.replications {
        let coverage = match a.method {
            MethodArg::Coverage | MethodArg::Both => {
                let cfg = CampaignConfig {
                    master_seed: experiment::replication_seed(base.master_seed, r),
                    ..base.clone()
                };
                Some(coverage_campaign(&cfg).map_err(campaign_error)?)
            }
            MethodArg::Random => None,
        };
        let random = match (a.method, &coverage) {
            (MethodArg::Both, Some(c)) => {
                // Only the budget mode is read; the amount comes from `c`.
                let cfg = CampaignConfig {
                    budget: Some(Budget {
                        mode: config.campaign.budget_mode,
                        amount: 0.0,
                    }),
                    ..base.clone()
                };
                Some(
                    experiment::matched_random(&cfg, c, r)
                        .map_err(|e| CliError::Usage(e.to_string()))?,
                )
            }
            (MethodArg::Random, _) => {
                let cfg = CampaignConfig {
                    method: Method::Random,
                    master_seed: experiment::random_replication_seed(base.master_seed, r),
                    budget: fixed_budget,
                    ..base.clone()
                };
                Some(random_campaign(&cfg).map_err(campaign_error)?)
            }
            _ => None,
        };
        for c in coverage.iter().chain(random.iter()) {
            save_campaign(&a.out_dir, c, r)?;
        }
        pairs.push((
            coverage.map(|c| ExperimentReport::from_campaign(&c, r)),
            random.map(|c| ExperimentReport::from_campaign(&c, r)),
        ));
    }
    let mut text = String::new();
    let _ = writeln!(text, "# resolved config: resolved_config.json");
    let both: Vec<(&ExperimentReport, &ExperimentReport)> = pairs
        .iter()
        .filter_map(|(c, r)| Some((c.as_ref()?, r.as_ref()?)))
        .collect();
    if both.is_empty() {
        for rep in pairs.iter().flat_map(|(c, r)| c.iter().chain(r.iter())) {
            text.push_str(&rep.metrics_csv());
        }
    } else {
        text.push_str(&experiment::summary(&both));
    }
    write(&a.out_dir.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn campaign_error(e: sitcov::testgen::CampaignError) -> CliError {
    use sitcov::testgen::CampaignError as E;
    match e {
        E::Generation(g) => gen_error(g),
        other => CliError::Usage(other.to_string()),
    }
}

fn save_campaign(out: &Path, c: &CampaignResult, r: u32) -> Result<(), CliError> {
    let dir = out.join(format!("{}-r{r}", c.method.name()));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let rep = ExperimentReport::from_campaign(c, r);
    write(&dir.join("manifest.json"), &Manifest::of(c, r).to_json())?;
    write(&dir.join("candidates.csv"), &c.candidates_csv())?;
    write(&dir.join("matrix.csv"), &rep.matrix.to_csv())?;
    write(&dir.join("metrics.csv"), &rep.metrics_csv())?;
    write(&dir.join("curve.csv"), &rep.curve_csv())?;
    write(&dir.join("coverage.csv"), &c.tracker.snapshot_csv())
}

/// Manifests under `dir`, one per campaign subdirectory, in name order.
fn load_manifests(dir: &Path) -> Result<Vec<Manifest>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path().join("manifest.json")))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Io(format!(
            "{}: no campaign manifests found",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            Manifest::from_json(&read(p)?)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn report(config: CliConfig, a: ReportArgs) -> Result<(), CliError> {
    let manifests = load_manifests(&a.in_dir)?;
    let reports: Vec<ExperimentReport> = manifests
        .iter()
        .map(|m| ExperimentReport::from_campaign(&m.result, m.replication))
        .collect();
    let of = |method: Method| -> Vec<&ExperimentReport> {
        reports.iter().filter(|r| r.method == method).collect()
    };
    let all: Vec<&ExperimentReport> = reports.iter().collect();
    let csv = match a.figure {
        Figure::Fig2 => fig2_csv(&all),
        Figure::Fig3 => fig3_csv(&all),
        Figure::Fig4 => {
            let sweep: Vec<ExperimentReport> = manifests
                .iter()
                .filter(|m| m.method == Method::CoverageDriven)
                .flat_map(|m| {
                    // Levels above the campaign's limit are skipped; the full campaign is always a point.
                    let mut levels = config.campaign.levels.clone();
                    levels.retain(|l| *l < m.result.config.candidate_limit);
                    levels.push(m.result.config.candidate_limit);
                    prefix_reports(&m.result, &levels, m.replication)
                })
                .collect();
            if sweep.is_empty() {
                return Err(CliError::Io(
                    "fig4 needs coverage campaign manifests".into(),
                ));
            }
            let refs: Vec<&ExperimentReport> = sweep.iter().collect();
            let (pts, fit) = experiment::coverage_fault_scatter(&refs)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            fig4_csv(&pts, &fit)
        }
        Figure::Table2 => {
            let (c, r) = (of(Method::CoverageDriven), of(Method::Random));
            if c.is_empty() || r.is_empty() {
                return Err(CliError::Io(
                    "table2 needs both coverage and random manifests".into(),
                ));
            }
            let cm: Vec<&MapFaultMatrix> = c.iter().map(|x| &x.matrix).collect();
            let rm: Vec<&MapFaultMatrix> = r.iter().map(|x| &x.matrix).collect();
            table2_csv(&per_fault_rate_difference(&cm, &rm))
        }
    };
    match &a.out {
        Some(p) => write(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn faults_list(json: bool) -> Result<(), CliError> {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(catalogue()).expect("catalogue serialises")
        );
    } else {
        println!("id\thook\tdescription");
        for f in catalogue() {
            println!("{}\t{}\t{}", f.id, f.hook, f.description);
        }
    }
    Ok(())
}
