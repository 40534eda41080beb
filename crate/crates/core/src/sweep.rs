//! Day-ahead solves over a grid of log-probability risk tolerances.

use psps_milp::Limits;
use serde::{Deserialize, Serialize};

use crate::formulation::{
    expected_line_risk, log_budget_lhs, solve_day_ahead, CommitmentPlan, DamagedTerm, DayAheadSolution,
    DispatchSolution, FormulationOptions, RiskBudget,
};
use crate::grid::PowerNetwork;
use crate::risk::LineRisk;
use crate::rt::average_available_generation;
use crate::scenario::ScenarioSet;
use crate::Result;

/// Tolerance that admits exactly the `k` riskiest lines energized all day.
pub fn tolerance_for_lines(line_risk: &[LineRisk], k: usize, mode: DamagedTerm) -> f64 {
    let h = line_risk.first().map_or(0, |r| r.pi.len());
    let mut risky: Vec<usize> = (0..line_risk.len()).filter(|&l| !line_risk[l].is_zero_risk()).collect();
    risky.sort_by(|&a, &b| line_risk[b].pi[0].total_cmp(&line_risk[a].pi[0]).then(a.cmp(&b)));
    let mut on = vec![vec![false; h]; line_risk.len()];
    for &l in risky.iter().take(k) {
        on[l] = vec![true; h];
    }
    let worst = (0..h)
        .map(|t| log_budget_lhs(line_risk, &on, t, mode))
        .fold(f64::NEG_INFINITY, f64::max);
    // a hair of slack so the defining pattern stays feasible after rounding
    (worst + 1e-9).exp()
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub damaged_term: DamagedTerm,
    /// Limits for the full search at each point.
    pub limits: Limits,
    /// Greedy line additions before the full search.
    pub greedy: bool,
    /// Limits for each fixed-line solve inside the greedy pass.
    pub greedy_limits: Limits,
    pub options: FormulationOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            damaged_term: DamagedTerm::Cumulative,
            limits: Limits::default(),
            greedy: true,
            greedy_limits: Limits::default().with_rel_gap(1e-4).with_max_nodes(50),
            options: FormulationOptions {
                energize_zero_risk: true,
                ..FormulationOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub pi_tol: f64,
    pub mean_nzr_lines: f64,
    pub da_cost: f64,
    pub gap: f64,
    pub served_mwh: f64,
    pub aag_mw: f64,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub summary: SweepSummary,
    pub solution: DayAheadSolution,
}

/// Probability-weighted energy served by a day-ahead dispatch.
pub fn expected_served_mwh(net: &PowerNetwork, dispatch: &DispatchSolution, scenarios: &ScenarioSet) -> f64 {
    dispatch
        .scenarios
        .iter()
        .zip(&scenarios.scenarios)
        .map(|(d, s)| {
            let mwh: f64 = d
                .served
                .iter()
                .zip(&s.demand)
                .map(|(x, dem)| x.iter().zip(dem).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            s.probability * mwh * net.step_hours
        })
        .sum()
}

/// Solves the day-ahead model at each tolerance in increasing order. The
/// plan of each point seeds the next, so cost never rises along the grid.
pub fn sweep_day_ahead(
    net: &PowerNetwork,
    scenarios: &ScenarioSet,
    pi_tols: &[f64],
    cfg: &SweepConfig,
) -> Result<Vec<SweepPoint>> {
    let line_risk = expected_line_risk(net, scenarios)?;
    let pi: Vec<f64> = line_risk.iter().map(|r| r.pi[0]).collect();
    let mut order: Vec<usize> = (0..pi_tols.len()).collect();
    order.sort_by(|&a, &b| pi_tols[a].total_cmp(&pi_tols[b]));
    let mut out: Vec<Option<SweepPoint>> = vec![None; pi_tols.len()];
    let mut previous: Option<DayAheadSolution> = None;
    for i in order {
        let budget = RiskBudget::LogWip {
            pi_tol: pi_tols[i],
            damaged_term: cfg.damaged_term,
        };
        let mut start = previous.as_ref().map(|s| (s.objective, s.plan.clone()));
        if cfg.greedy {
            start = greedy_lines(net, scenarios, &line_risk, &budget, cfg, start.clone())?.or(start);
        }
        let opts = FormulationOptions {
            start_plan: start.map(|(_, p)| p),
            ..cfg.options.clone()
        };
        let sol = solve_day_ahead(net, scenarios, &budget, None, &cfg.limits, &opts)?;
        let summary = SweepSummary {
            pi_tol: pi_tols[i],
            mean_nzr_lines: sol.plan.mean_nzr_active(&pi),
            da_cost: sol.objective,
            gap: sol.gap,
            served_mwh: expected_served_mwh(net, &sol.dispatch, scenarios),
            aag_mw: average_available_generation(net, &sol.plan),
        };
        previous = Some(sol.clone());
        out[i] = Some(SweepPoint { summary, solution: sol });
    }
    Ok(out.into_iter().flatten().collect())
}

/// Starting from the lines energized all day in `start`, repeatedly adds
/// the risky line whose energization lowers cost the most while the
/// all-day pattern stays within the budget.
fn greedy_lines(
    net: &PowerNetwork,
    scenarios: &ScenarioSet,
    line_risk: &[LineRisk],
    budget: &RiskBudget,
    cfg: &SweepConfig,
    start: Option<(f64, CommitmentPlan)>,
) -> Result<Option<(f64, CommitmentPlan)>> {
    let RiskBudget::LogWip { pi_tol, damaged_term } = *budget else {
        return Ok(None);
    };
    let h = net.horizon;
    let limit = pi_tol.ln();
    let mut on: Vec<bool> = match &start {
        Some((_, p)) => p.line_on.iter().map(|r| r.iter().all(|&b| b)).collect(),
        None => line_risk.iter().map(|r| r.is_zero_risk()).collect(),
    };
    let pattern = |on: &[bool]| -> Vec<Vec<bool>> { on.iter().map(|&b| vec![b; h]).collect() };
    let fits = |on: &[bool]| {
        let p = pattern(on);
        (0..h).all(|t| log_budget_lhs(line_risk, &p, t, damaged_term) <= limit)
    };
    let solve = |on: &[bool]| -> Result<Option<(f64, CommitmentPlan)>> {
        let opts = FormulationOptions {
            fixed_lines: Some(pattern(on)),
            ..cfg.options.clone()
        };
        match solve_day_ahead(net, scenarios, budget, None, &cfg.greedy_limits, &opts) {
            Ok(s) => Ok(Some((s.objective, s.plan))),
            // a pattern without an incumbent inside the node limit is skipped
            Err(crate::PspsError::Infeasible { .. } | crate::PspsError::Solver(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    if !fits(&on) {
        return Ok(None);
    }
    let mut best = match start {
        Some(s) => Some(s),
        None => solve(&on)?,
    };
    loop {
        let mut step: Option<(usize, f64, CommitmentPlan)> = None;
        for l in 0..on.len() {
            if on[l] || line_risk[l].is_zero_risk() {
                continue;
            }
            on[l] = true;
            if fits(&on) {
                if let Some((obj, plan)) = solve(&on)? {
                    let target = step.as_ref().map(|s| s.1).or(best.as_ref().map(|b| b.0));
                    if target.is_none_or(|v| obj < v - 1e-9 * v.abs().max(1.0)) {
                        step = Some((l, obj, plan));
                    }
                }
            }
            on[l] = false;
        }
        match step {
            Some((l, obj, plan)) => {
                on[l] = true;
                best = Some((obj, plan));
            }
            None => return Ok(best),
        }
    }
}
