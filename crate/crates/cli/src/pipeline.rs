//! Stages shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use psps_core::analytics::{compute_vss_vpi, VssReport};
use psps_core::formulation::{
    save_plan, solve_day_ahead, write_dispatch_csv, write_plan_csv, CommitmentPlan, CostBreakdown, CvarConfig,
    DayAheadSolution, FormulationOptions, RiskBudget,
};
use psps_core::grid::{load_network, PowerNetwork};
use psps_core::risk::{build_line_risk, load_line_risk, LineRisk, ReliabilityTable, RiskRaster};
use psps_core::rt::{evaluate_plan, write_rt_csv, RtConfig, RtReport};
use psps_core::scenario::{
    build_fan_scenarios, build_tree_scenarios, expected_scenario, load_demand_curve, load_history, project_demand,
    Scenario, ScenarioKind, ScenarioSet,
};
use psps_core::sweep::{sweep_day_ahead, tolerance_for_lines, SweepConfig, SweepSummary};
use psps_milp::Limits;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, ScenarioStructure};
use crate::error::{CliError, Stage};

/// Seed for one stage and index, derived from the run seed by hashing.
pub fn sub_seed(seed: u64, stage: Stage, index: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{stage}/{index}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Artifact writer that remembers what it wrote for the manifest.
pub struct Output {
    pub dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn subdir(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let d = self.dir.join(name);
        fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        Ok(d)
    }

    pub fn json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
        self.text(rel, &text)
    }

    pub fn text(&mut self, rel: impl AsRef<Path>, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(rel.as_ref());
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push(rel.as_ref().to_path_buf());
        Ok(())
    }

    /// Records files written by library helpers.
    pub fn record(&mut self, rel: impl AsRef<Path>) {
        self.artifacts.push(rel.as_ref().to_path_buf());
    }
}

pub fn network(cfg: &RunConfig) -> Result<PowerNetwork, CliError> {
    load_network(&cfg.network).map_err(CliError::at(Stage::GridModel))
}

/// Line risk from a precomputed file or from the raster; `None` when the
/// config has neither.
pub fn line_risk(cfg: &RunConfig, net: &PowerNetwork) -> Result<Option<Vec<LineRisk>>, CliError> {
    let at = CliError::at(Stage::RiskPipeline);
    if let Some(p) = &cfg.line_risk {
        let risk = load_line_risk(p).map_err(&at)?;
        if risk.len() != net.lines.len() {
            return Err(CliError::from_core(
                Stage::RiskPipeline,
                psps_core::PspsError::DimensionMismatch(format!(
                    "{} line risks for {} lines",
                    risk.len(),
                    net.lines.len()
                )),
            ));
        }
        return Ok(Some(risk));
    }
    let Some(r) = &cfg.raster else {
        return Ok(None);
    };
    let raster = RiskRaster::load_esri(&r.path, cfg.metric, &r.date).map_err(&at)?;
    let table = match &cfg.reliability_table {
        Some(p) => ReliabilityTable::load_csv(p, cfg.metric).map_err(&at)?,
        None => ReliabilityTable::synthetic_linear(cfg.metric, 6),
    };
    build_line_risk(net, &raster, &table, cfg.aggregation)
        .map(Some)
        .map_err(at)
}

fn daily_pi(risk: &[LineRisk]) -> Vec<f64> {
    risk.iter().map(|r| r.pi.iter().copied().fold(0.0, f64::max)).collect()
}

/// Day-ahead scenarios from a scenario file, from history, or a single
/// scenario on the base profile.
pub fn scenarios(cfg: &RunConfig, net: &PowerNetwork, risk: Option<&[LineRisk]>) -> Result<ScenarioSet, CliError> {
    let at = CliError::at(Stage::ScenarioEngine);
    let set = if let Some(p) = &cfg.scenario_file {
        ScenarioSet::load(p).map_err(&at)?
    } else if let Some(h) = &cfg.history {
        let history = load_history(&h.demand, &h.risk).map_err(&at)?;
        match cfg.scenarios.structure {
            ScenarioStructure::Fan => build_fan_scenarios(&history, net, cfg.scenarios.fan_probability_mode),
            ScenarioStructure::Tree => build_tree_scenarios(&history, net, cfg.scenarios.count),
        }
        .map_err(&at)?
    } else {
        let line_risk = risk.map_or_else(|| vec![0.0; net.lines.len()], daily_pi);
        ScenarioSet {
            kind: ScenarioKind::DayAhead,
            scenarios: vec![Scenario {
                id: 1,
                probability: 1.0,
                demand: net.demands.iter().map(|d| d.base_profile.clone()).collect(),
                line_risk,
                line_metric: Vec::new(),
            }],
        }
    };
    set.validate(net).map_err(at)?;
    Ok(set)
}

pub fn limits(cfg: &RunConfig) -> Limits {
    Limits::default()
        .with_rel_gap(cfg.solver.rel_gap)
        .with_max_nodes(cfg.solver.max_nodes)
}

pub fn options(cfg: &RunConfig) -> FormulationOptions {
    FormulationOptions {
        theta_bound: cfg.theta_bound,
        energize_zero_risk: cfg.energize_zero_risk,
        ..FormulationOptions::default()
    }
}

pub fn day_ahead(cfg: &RunConfig, net: &PowerNetwork, set: &ScenarioSet) -> Result<DayAheadSolution, CliError> {
    solve_day_ahead(net, set, &cfg.budget, cfg.cvar, &limits(cfg), &options(cfg))
        .map_err(CliError::at(Stage::PspsFormulation))
}

#[derive(Serialize)]
struct DaSummary<'a> {
    budget: String,
    status: String,
    objective: f64,
    gap: f64,
    nodes: usize,
    costs: &'a CostBreakdown,
}

/// Plan JSON, plan and dispatch CSVs and the cost breakdown, under `rel`.
pub fn write_day_ahead(
    out: &mut Output,
    rel: &Path,
    net: &PowerNetwork,
    set: &ScenarioSet,
    budget: &RiskBudget,
    sol: &DayAheadSolution,
) -> Result<(), CliError> {
    let dir = out.dir.join(rel);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let io = |e: psps_core::PspsError| CliError::from_core(Stage::Output, e);
    save_plan(&sol.plan, dir.join("plan.json")).map_err(io)?;
    write_plan_csv(net, &sol.plan, &dir).map_err(io)?;
    write_dispatch_csv(net, &sol.dispatch, set, &dir.join("dispatch.csv")).map_err(io)?;
    for f in ["plan.json", "commitments.csv", "energizations.csv", "dispatch.csv"] {
        out.record(rel.join(f));
    }
    out.json(
        rel.join("costs.json"),
        &DaSummary {
            budget: budget.label(),
            status: format!("{:?}", sol.status),
            objective: sol.objective,
            gap: sol.gap,
            nodes: sol.nodes,
            costs: &sol.costs,
        },
    )
}

/// Line risk and demand the real-time stage samples against.
pub fn rt_inputs(
    cfg: &RunConfig,
    net: &PowerNetwork,
    risk: Option<&[LineRisk]>,
    set: &ScenarioSet,
) -> Result<(Vec<LineRisk>, Vec<Vec<f64>>), CliError> {
    let at = CliError::at(Stage::RtEvaluator);
    let mean = expected_scenario(set);
    let rt_risk = match risk {
        Some(r) => r.to_vec(),
        None => net
            .lines
            .iter()
            .zip(&mean.line_risk)
            .map(|(l, &p)| LineRisk::constant(l.id, p, net.horizon))
            .collect::<psps_core::Result<Vec<_>>>()
            .map_err(&at)?,
    };
    let demand = match &cfg.realized_demand {
        Some(p) => {
            let curve = load_demand_curve(p).map_err(&at)?;
            project_demand(&curve, net).map_err(&at)?
        }
        None => mean.demand,
    };
    Ok((rt_risk, demand))
}

pub fn rt_config(cfg: &RunConfig, index: usize) -> RtConfig {
    RtConfig {
        samples: cfg.rt.samples,
        seed: sub_seed(cfg.seed, Stage::RtEvaluator, index),
        onset: cfg.rt.onset,
        window: cfg.rt.window,
    }
}

pub fn simulate(
    cfg: &RunConfig,
    net: &PowerNetwork,
    plan: &CommitmentPlan,
    rt_risk: &[LineRisk],
    demand: &[Vec<f64>],
    index: usize,
) -> Result<RtReport, CliError> {
    evaluate_plan(net, plan, rt_risk, demand, &rt_config(cfg, index)).map_err(CliError::at(Stage::RtEvaluator))
}

pub fn write_rt(out: &mut Output, rel: &Path, report: &RtReport) -> Result<(), CliError> {
    out.json(rel.join("rt_report.json"), report)?;
    let path = out.dir.join(rel).join("rt_scenarios.csv");
    write_rt_csv(report, &path).map_err(|e| CliError::from_core(Stage::Output, e))?;
    out.record(rel.join("rt_scenarios.csv"));
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub admitted_lines: Option<usize>,
    #[serde(flatten)]
    pub summary: SweepSummary,
    pub rt_cost: f64,
}

/// Budget sweep with one subdirectory per grid point and a summary CSV.
pub fn sweep(
    cfg: &RunConfig,
    net: &PowerNetwork,
    risk: Option<&[LineRisk]>,
    set: &ScenarioSet,
    out: &mut Output,
) -> Result<Vec<SweepRow>, CliError> {
    let at = CliError::at(Stage::PspsFormulation);
    let budget_set = if cfg.sweep.expected_scenario {
        ScenarioSet::single(expected_scenario(set))
    } else {
        set.clone()
    };
    let damaged_term = match cfg.budget {
        RiskBudget::LogWip { damaged_term, .. } => damaged_term,
        _ => Default::default(),
    };
    let expected = psps_core::formulation::expected_line_risk(net, &budget_set).map_err(&at)?;
    let (tols, admitted): (Vec<f64>, Vec<Option<usize>>) = if !cfg.sweep.lines.is_empty() {
        cfg.sweep
            .lines
            .iter()
            .map(|&k| (tolerance_for_lines(&expected, k, damaged_term), Some(k)))
            .unzip()
    } else if !cfg.sweep.pi_tols.is_empty() {
        cfg.sweep.pi_tols.iter().map(|&p| (p, None)).unzip()
    } else {
        return Err(CliError::config("sweep needs `sweep.lines` or `sweep.pi_tols`"));
    };
    let mut sc = SweepConfig {
        damaged_term,
        limits: limits(cfg),
        options: FormulationOptions {
            theta_bound: cfg.theta_bound,
            ..SweepConfig::default().options
        },
        ..SweepConfig::default()
    };
    if let Some(n) = cfg.sweep.max_nodes {
        sc.limits = sc.limits.with_max_nodes(n);
    }
    let points = sweep_day_ahead(net, &budget_set, &tols, &sc).map_err(&at)?;
    let (rt_risk, demand) = rt_inputs(cfg, net, risk, set)?;
    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let rel = PathBuf::from(format!("point_{:02}", i + 1));
        let budget = RiskBudget::LogWip {
            pi_tol: tols[i],
            damaged_term,
        };
        write_day_ahead(out, &rel, net, &budget_set, &budget, &p.solution)?;
        let report = simulate(cfg, net, &p.solution.plan, &rt_risk, &demand, i)?;
        write_rt(out, &rel, &report)?;
        rows.push(SweepRow {
            point: i + 1,
            admitted_lines: admitted[i],
            summary: p.summary.clone(),
            rt_cost: report.expected_cost,
        });
    }
    let mut text = String::from("point,admitted_lines,pi_tol,nzr_lines,da_cost,gap,served_mwh,aag_mw,rt_cost\n");
    for r in &rows {
        let s = &r.summary;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.point,
            r.admitted_lines.map_or(String::new(), |k| k.to_string()),
            s.pi_tol,
            s.mean_nzr_lines,
            s.da_cost,
            s.gap,
            s.served_mwh,
            s.aag_mw,
            r.rt_cost
        ));
    }
    out.text("sweep_summary.csv", &text)?;
    Ok(rows)
}

pub fn vss(cfg: &RunConfig, net: &PowerNetwork, set: &ScenarioSet, cvar: CvarConfig) -> Result<VssReport, CliError> {
    compute_vss_vpi(net, set, &cfg.budget, cvar, &limits(cfg), &options(cfg)).map_err(CliError::at(Stage::Analytics))
}
