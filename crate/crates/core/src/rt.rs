//! Real-time evaluation of a fixed day-ahead plan: Monte Carlo line
//! outages, recourse dispatch, realized risk and available generation.

use std::collections::HashMap;

use psps_milp::{solve_milp, Limits, MilpModel, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PspsError, Result};
use crate::formulation::{
    add_dispatch_block, commitment_cost, dispatch_costs, extract_block, log_budget_lhs, BlockSpec, CommitmentPlan,
    DamagedTerm, ScenarioDispatch, Switch,
};
use crate::grid::PowerNetwork;
use crate::risk::LineRisk;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnsetMode {
    /// Failure begins at a uniformly drawn step.
    #[default]
    Uniform,
    /// A failed line is out for the whole day.
    WholeDay,
}

impl std::str::FromStr for OnsetMode {
    type Err = PspsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(OnsetMode::Uniform),
            "whole-day" => Ok(OnsetMode::WholeDay),
            _ => Err(PspsError::Config(format!("unknown onset mode '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageScenario {
    pub id: usize,
    pub probability: f64,
    /// `[line][step]`, already combined with the plan's energization.
    pub availability: Vec<Vec<bool>>,
    /// Failure onset step per line, if the line ignited.
    pub onset: Vec<Option<usize>>,
}

impl OutageScenario {
    pub fn failed_lines(&self) -> usize {
        self.onset.iter().filter(|o| o.is_some()).count()
    }
}

/// Daily ignition probability of a line: its largest per-step value.
fn daily_pi(lr: &LineRisk) -> f64 {
    lr.pi.iter().copied().fold(0.0, f64::max)
}

/// Draws `n` outage samples. Each sample has its own ChaCha stream keyed
/// by `(seed, id)`, so a sample does not depend on how many others exist.
pub fn sample_outages(
    line_risk: &[LineRisk],
    plan: &CommitmentPlan,
    n: usize,
    seed: u64,
    onset: OnsetMode,
) -> Result<Vec<OutageScenario>> {
    if n == 0 {
        return Err(PspsError::Config("at least one outage sample is required".into()));
    }
    if line_risk.len() != plan.line_on.len() {
        return Err(PspsError::DimensionMismatch(format!(
            "{} line risks for {} planned lines",
            line_risk.len(),
            plan.line_on.len()
        )));
    }
    let h = plan.horizon();
    let probs: Vec<f64> = line_risk.iter().map(daily_pi).collect();
    Ok((0..n)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id as u64);
            let mut availability = plan.line_on.clone();
            let mut onsets = vec![None; probs.len()];
            for (l, &pi) in probs.iter().enumerate() {
                let u: f64 = rng.gen();
                let start = match onset {
                    OnsetMode::Uniform => rng.gen_range(0..h.max(1)),
                    OnsetMode::WholeDay => 0,
                };
                if u < pi && plan.line_on[l].iter().any(|&on| on) {
                    onsets[l] = Some(start);
                    for a in availability[l].iter_mut().skip(start) {
                        *a = false;
                    }
                }
            }
            OutageScenario {
                id,
                probability: 1.0 / n as f64,
                availability,
                onset: onsets,
            }
        })
        .collect())
}

fn spill_penalty(net: &PowerNetwork) -> f64 {
    10.0 * net.demands.iter().map(|d| d.voll).fold(0.0, f64::max).max(1.0)
}

fn check_plan(net: &PowerNetwork, plan: &CommitmentPlan, demand: &[Vec<f64>]) -> Result<()> {
    let h = plan.horizon();
    let ok = plan.gen_on.len() == net.generators.len()
        && plan.line_on.len() == net.lines.len()
        && demand.len() == net.demands.len()
        && demand.iter().all(|d| d.len() == h)
        && plan.gen_on.iter().chain(&plan.line_on).all(|r| r.len() == h);
    if ok {
        Ok(())
    } else {
        Err(PspsError::DimensionMismatch("plan, network and demand disagree".into()))
    }
}

/// Cost of a recourse dispatch excluding commitment cost: production,
/// lost load and spilled energy.
fn operating_cost(net: &PowerNetwork, d: &ScenarioDispatch, demand: &[Vec<f64>]) -> f64 {
    let (oc, voll) = dispatch_costs(net, d, demand);
    let spill: f64 = d.spill.iter().flatten().sum();
    oc + voll + spill_penalty(net) * net.step_hours * spill
}

/// Solves the dispatch LP for steps `t0..t0 + len` with commitments and
/// availability fixed.
fn solve_window(
    net: &PowerNetwork,
    gen_on: &[Vec<bool>],
    availability: &[Vec<bool>],
    demand: &[Vec<f64>],
    prior_aux: Option<&[f64]>,
    t0: usize,
) -> Result<ScenarioDispatch> {
    let mut m = MilpModel::new();
    let spec = BlockSpec {
        tag: String::new(),
        demand,
        gen_on: Switch::Fixed(gen_on),
        line_on: Switch::Fixed(availability),
        weight: 1.0,
        theta_bound: 0.6,
        prior_aux,
        spill_penalty: Some(spill_penalty(net)),
        t0,
    };
    let block = add_dispatch_block(&mut m, net, &spec)?;
    let sol = solve_milp(&m, &Limits::default())?;
    match sol.status {
        SolveStatus::Optimal => Ok(extract_block(net, &block, gen_on, &sol.values)),
        s => Err(PspsError::Solver(s)),
    }
}

/// Recourse dispatch over the whole horizon. Returns the dispatch and
/// `Pi`, which includes the plan's (sunk) commitment cost.
pub fn solve_recourse(
    net: &PowerNetwork,
    plan: &CommitmentPlan,
    scenario: &OutageScenario,
    demand: &[Vec<f64>],
) -> Result<(ScenarioDispatch, f64)> {
    check_plan(net, plan, demand)?;
    let d = solve_window(net, &plan.gen_on, &scenario.availability, demand, None, 0)?;
    let cost = commitment_cost(net, plan) + operating_cost(net, &d, demand);
    Ok((d, cost))
}

fn slice_steps<T: Clone>(rows: &[Vec<T>], range: std::ops::Range<usize>) -> Vec<Vec<T>> {
    rows.iter().map(|r| r[range.clone()].to_vec()).collect()
}

/// Solves over `t..min(t + window, H)` at every step and keeps only step
/// `t`; the window shrinks near the end of the day.
pub fn receding_horizon_run(
    net: &PowerNetwork,
    plan: &CommitmentPlan,
    scenario: &OutageScenario,
    demand: &[Vec<f64>],
    window: usize,
) -> Result<(ScenarioDispatch, f64)> {
    check_plan(net, plan, demand)?;
    let h = plan.horizon();
    if window == 0 || window > h {
        return Err(PspsError::Config(format!("window {window} outside 1..={h}")));
    }
    let ng = net.generators.len();
    let mut out = ScenarioDispatch {
        p: vec![Vec::with_capacity(h); ng],
        p_aux: vec![Vec::with_capacity(h); ng],
        flow: vec![Vec::with_capacity(h); net.lines.len()],
        theta: vec![Vec::with_capacity(h); net.buses.len()],
        served: vec![Vec::with_capacity(h); net.demands.len()],
        spill: vec![Vec::with_capacity(h); net.buses.len()],
    };
    let mut prior: Option<Vec<f64>> = None;
    for t in 0..h {
        let range = t..(t + window).min(h);
        let d = solve_window(
            net,
            &slice_steps(&plan.gen_on, range.clone()),
            &slice_steps(&scenario.availability, range.clone()),
            &slice_steps(demand, range),
            prior.as_deref(),
            t,
        )?;
        let first = |src: &[Vec<f64>], dst: &mut [Vec<f64>]| {
            for (s, o) in src.iter().zip(dst.iter_mut()) {
                o.push(s[0]);
            }
        };
        first(&d.p, &mut out.p);
        first(&d.p_aux, &mut out.p_aux);
        first(&d.flow, &mut out.flow);
        first(&d.theta, &mut out.theta);
        first(&d.served, &mut out.served);
        first(&d.spill, &mut out.spill);
        prior = Some(d.p_aux.iter().map(|r| r[0]).collect());
    }
    let cost = commitment_cost(net, plan) + operating_cost(net, &out, demand);
    Ok((out, cost))
}

/// Capacity of committed units averaged over the day, in MW.
pub fn average_available_generation(net: &PowerNetwork, plan: &CommitmentPlan) -> f64 {
    let h = plan.horizon();
    if h == 0 {
        return 0.0;
    }
    let total: f64 = net
        .generators
        .iter()
        .zip(&plan.gen_on)
        .map(|(g, on)| g.p_max * on.iter().filter(|&&z| z).count() as f64)
        .sum();
    total / h as f64
}

/// Left-hand side of the log-probability budget at the last step for
/// the given energization (or realized availability) pattern.
pub fn realized_risk(line_risk: &[LineRisk], line_on: &[Vec<bool>]) -> f64 {
    match line_on.first().map_or(0, |r| r.len()) {
        0 => 0.0,
        h => log_budget_lhs(line_risk, line_on, h - 1, DamagedTerm::Cumulative),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostQuantiles {
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtReport {
    pub samples: usize,
    pub seed: u64,
    pub onset: OnsetMode,
    pub window: usize,
    pub per_scenario_cost: Vec<f64>,
    pub expected_cost: f64,
    pub cost_quantiles: CostQuantiles,
    /// Budget left-hand side at the plan's energization.
    pub realized_risk: f64,
    /// Same, averaged over realized availability.
    pub mean_realized_risk: f64,
    pub demand_served_mwh: f64,
    pub aag_mw: f64,
    pub mean_failed_lines: f64,
}

#[derive(Clone, Debug)]
pub struct RtConfig {
    pub samples: usize,
    pub seed: u64,
    pub onset: OnsetMode,
    /// Receding-horizon window; `None` solves the day in one shot.
    pub window: Option<usize>,
}

impl Default for RtConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            onset: OnsetMode::Uniform,
            window: None,
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Monte Carlo evaluation of a plan. Samples with identical availability
/// share one recourse solve.
pub fn evaluate_plan(
    net: &PowerNetwork,
    plan: &CommitmentPlan,
    line_risk: &[LineRisk],
    demand: &[Vec<f64>],
    cfg: &RtConfig,
) -> Result<RtReport> {
    check_plan(net, plan, demand)?;
    let scenarios = sample_outages(line_risk, plan, cfg.samples, cfg.seed, cfg.onset)?;
    let h = plan.horizon();
    let window = cfg.window.unwrap_or(h);
    let mut cache: HashMap<Vec<Vec<bool>>, (f64, f64)> = HashMap::new();
    let mut per = Vec::with_capacity(scenarios.len());
    let (mut served, mut risk, mut failed) = (0.0, 0.0, 0.0);
    for s in &scenarios {
        let (cost, mwh) = match cache.get(&s.availability) {
            Some(&v) => v,
            None => {
                let (d, cost) = if window == h {
                    solve_recourse(net, plan, s, demand)?
                } else {
                    receding_horizon_run(net, plan, s, demand, window)?
                };
                let mwh: f64 = (0..net.demands.len())
                    .map(|k| (0..h).map(|t| d.served[k][t] * demand[k][t]).sum::<f64>())
                    .sum::<f64>()
                    * net.step_hours;
                cache.insert(s.availability.clone(), (cost, mwh));
                (cost, mwh)
            }
        };
        per.push(cost);
        served += s.probability * mwh;
        risk += s.probability * realized_risk(line_risk, &s.availability);
        failed += s.probability * s.failed_lines() as f64;
    }
    let expected_cost = scenarios.iter().zip(&per).map(|(s, c)| s.probability * c).sum();
    let mut sorted = per.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(RtReport {
        samples: cfg.samples,
        seed: cfg.seed,
        onset: cfg.onset,
        window,
        cost_quantiles: CostQuantiles {
            p05: quantile(&sorted, 0.05),
            p50: quantile(&sorted, 0.5),
            p95: quantile(&sorted, 0.95),
        },
        per_scenario_cost: per,
        expected_cost,
        realized_risk: realized_risk(line_risk, &plan.line_on),
        mean_realized_risk: risk,
        demand_served_mwh: served,
        aag_mw: average_available_generation(net, plan),
        mean_failed_lines: failed,
    })
}

pub fn write_rt_csv(report: &RtReport, path: &std::path::Path) -> Result<()> {
    let mut text = String::from("scenario,cost\n");
    for (i, c) in report.per_scenario_cost.iter().enumerate() {
        text.push_str(&format!("{i},{c}\n"));
    }
    std::fs::write(path, text).map_err(|e| PspsError::io(path, e))
}
