//! Day-ahead unit commitment and line de-energization as a MILP.
//!
//! First-stage binaries (generator status, startups, shutdowns, line
//! energization) are shared by all scenarios; dispatch, flows, angles and
//! served fractions are per scenario. Line shutdown indicators are the
//! linear expression `z[l][t-1] - z[l][t]` with `z[l][-1] = 1` rather than
//! separate variables.

use std::io::Write;
use std::path::Path;

use psps_milp::{solve_milp, Limits, MilpModel, MilpSolution, Sense, SolveStatus, VarId};
use serde::{Deserialize, Serialize};

use crate::analytics::cvar;
use crate::error::{PspsError, Result};
use crate::grid::PowerNetwork;
use crate::risk::LineRisk;
use crate::scenario::{expected_scenario, ScenarioSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamagedTerm {
    /// `(1 - z[t]) ln(pi)` at every step once a line is dark.
    #[default]
    Cumulative,
    /// `z_dn[t] ln(pi)` only at the step the line goes dark.
    ShutdownStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RiskBudget {
    None,
    WfpiSum {
        r_tol: f64,
    },
    NMinusK {
        k: usize,
    },
    WfpiSlack {
        r_tol: f64,
        r_slack_max: f64,
        #[serde(default = "unit_penalty")]
        penalty: f64,
    },
    LogWip {
        pi_tol: f64,
        #[serde(default)]
        damaged_term: DamagedTerm,
    },
}

fn unit_penalty() -> f64 {
    1.0
}

impl RiskBudget {
    pub fn label(&self) -> String {
        match self {
            RiskBudget::None => "none".into(),
            RiskBudget::WfpiSum { r_tol } => format!("wfpi-sum(r_tol={r_tol})"),
            RiskBudget::NMinusK { k } => format!("n-minus-k(k={k})"),
            RiskBudget::WfpiSlack { r_tol, r_slack_max, .. } => {
                format!("wfpi-slack(r_tol={r_tol}, r_slack_max={r_slack_max})")
            }
            RiskBudget::LogWip { pi_tol, .. } => format!("log-wip(pi_tol={pi_tol})"),
        }
    }

    fn validate(&self, num_lines: usize) -> Result<()> {
        match *self {
            RiskBudget::LogWip { pi_tol, .. } if !(pi_tol > 0.0 && pi_tol <= 1.0) => {
                Err(PspsError::Config(format!("pi_tol must lie in (0, 1], got {pi_tol}")))
            }
            RiskBudget::NMinusK { k } if k > num_lines => {
                Err(PspsError::Config(format!("k = {k} exceeds the {num_lines} lines")))
            }
            RiskBudget::WfpiSlack { r_slack_max, .. } if !(r_slack_max >= 0.0) => {
                Err(PspsError::Config("r_slack_max must be nonnegative".into()))
            }
            RiskBudget::WfpiSum { r_tol } | RiskBudget::WfpiSlack { r_tol, .. } if !r_tol.is_finite() => {
                Err(PspsError::Config("r_tol must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvarConfig {
    pub beta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.95
}

impl CvarConfig {
    pub fn new(beta: f64, epsilon: f64) -> Self {
        Self { beta, epsilon }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormulationOptions {
    /// Symmetric phase-angle bound in radians.
    pub theta_bound: f64,
    /// Fix every first-stage binary to this plan.
    #[serde(skip)]
    pub fixed_plan: Option<CommitmentPlan>,
    /// Plan tried as the first incumbent.
    #[serde(skip)]
    pub start_plan: Option<CommitmentPlan>,
    /// Keep lines with zero ignition probability energized all day.
    #[serde(default)]
    pub energize_zero_risk: bool,
    /// Fix the energization of every line, `[line][step]`.
    #[serde(skip)]
    pub fixed_lines: Option<Vec<Vec<bool>>>,
}

impl Default for FormulationOptions {
    fn default() -> Self {
        Self {
            theta_bound: 0.6,
            fixed_plan: None,
            start_plan: None,
            energize_zero_risk: false,
            fixed_lines: None,
        }
    }
}

/// First-stage decisions, indexed `[generator or line][step]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitmentPlan {
    pub gen_on: Vec<Vec<bool>>,
    pub gen_up: Vec<Vec<bool>>,
    pub gen_dn: Vec<Vec<bool>>,
    pub line_on: Vec<Vec<bool>>,
    pub line_dn: Vec<Vec<bool>>,
    /// Per-step risk slack (zero unless the slack budget is used).
    #[serde(default)]
    pub risk_slack: Vec<f64>,
}

impl CommitmentPlan {
    pub fn horizon(&self) -> usize {
        self.gen_on.first().or(self.line_on.first()).map_or(0, |v| v.len())
    }

    /// Plan with up/down indicators derived from `gen_on` and the initial
    /// states, and line shutdown steps derived from `line_on`.
    pub fn from_status(net: &PowerNetwork, gen_on: Vec<Vec<bool>>, line_on: Vec<Vec<bool>>) -> Self {
        let h = net.horizon;
        let mut gen_up = vec![vec![false; h]; gen_on.len()];
        let mut gen_dn = vec![vec![false; h]; gen_on.len()];
        for (g, on) in gen_on.iter().enumerate() {
            let mut prev = net.generators[g].initially_on;
            for t in 0..h {
                gen_up[g][t] = on[t] && !prev;
                gen_dn[g][t] = !on[t] && prev;
                prev = on[t];
            }
        }
        let line_dn = line_on
            .iter()
            .map(|on| (0..h).map(|t| (t == 0 || on[t - 1]) && !on[t]).collect())
            .collect();
        Self {
            gen_on,
            gen_up,
            gen_dn,
            line_on,
            line_dn,
            risk_slack: vec![0.0; h],
        }
    }

    /// Number of lines with positive risk energized at each step.
    pub fn nzr_active(&self, line_risk: &[f64]) -> Vec<usize> {
        (0..self.horizon())
            .map(|t| {
                self.line_on
                    .iter()
                    .zip(line_risk)
                    .filter(|(on, &p)| p > 0.0 && on[t])
                    .count()
            })
            .collect()
    }

    pub fn mean_nzr_active(&self, line_risk: &[f64]) -> f64 {
        let v = self.nzr_active(line_risk);
        v.iter().sum::<usize>() as f64 / v.len().max(1) as f64
    }
}

/// Second-stage decisions of one scenario, indexed `[entity][step]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDispatch {
    pub p: Vec<Vec<f64>>,
    pub p_aux: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Served fraction `x` per demand.
    pub served: Vec<Vec<f64>>,
    /// Over-generation dumped per bus (recourse only).
    #[serde(default)]
    pub spill: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub scenarios: Vec<ScenarioDispatch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub uc: f64,
    /// Expected production cost.
    pub oc: f64,
    /// Expected lost-load cost.
    pub voll: f64,
    pub slack_penalty: f64,
    pub total: f64,
    pub per_scenario: Vec<f64>,
    pub mean: f64,
    pub cvar: f64,
    /// `(1 - beta) mean + beta cvar + slack_penalty`.
    pub mean_cvar_objective: f64,
    pub beta: f64,
    pub epsilon: f64,
}

/// Constant-or-variable binary used while emitting rows.
#[derive(Clone, Copy)]
pub(crate) enum Switch<'a> {
    Var(&'a [Vec<VarId>]),
    Fixed(&'a [Vec<bool>]),
}

/// Linear expression with a constant part.
#[derive(Clone, Debug, Default)]
pub(crate) struct Lin {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Lin {
    pub fn var(&mut self, v: VarId, a: f64) -> &mut Self {
        self.terms.push((v, a));
        self
    }

    pub fn switch(&mut self, s: Switch<'_>, k: usize, t: usize, a: f64) -> &mut Self {
        match s {
            Switch::Var(v) => self.terms.push((v[k][t], a)),
            Switch::Fixed(b) => {
                if b[k][t] {
                    self.constant += a;
                }
            }
        }
        self
    }

    pub fn emit(&self, m: &mut MilpModel, name: String, sense: Sense, rhs: f64) -> Result<()> {
        m.add_constraint(name, &self.terms, sense, rhs - self.constant)?;
        Ok(())
    }
}

/// Variables of one scenario's dispatch block.
#[derive(Clone, Debug)]
pub(crate) struct DispatchVars {
    pub p: Vec<Vec<VarId>>,
    pub flow: Vec<Vec<VarId>>,
    pub theta: Vec<Vec<VarId>>,
    pub served: Vec<Vec<VarId>>,
    pub spill: Vec<Vec<VarId>>,
    /// Production plus lost-load cost of the block, excluding commitment costs.
    pub cost: Lin,
}

pub(crate) struct BlockSpec<'a> {
    pub tag: String,
    pub demand: &'a [Vec<f64>],
    pub gen_on: Switch<'a>,
    pub line_on: Switch<'a>,
    /// Objective weight applied to the block cost.
    pub weight: f64,
    pub theta_bound: f64,
    /// Ramp reference for the step before the block: `(p_aux, on)` per generator.
    pub prior_aux: Option<&'a [f64]>,
    /// Per-MWh penalty on over-generation; `None` disables spill.
    pub spill_penalty: Option<f64>,
    /// First global step of the block (for receding windows).
    pub t0: usize,
}

/// Emits capacity, ramp, DC flow, thermal and balance rows for one
/// scenario over `spec.demand[0].len()` steps (or the network horizon when
/// there are no demands).
pub(crate) fn add_dispatch_block(m: &mut MilpModel, net: &PowerNetwork, spec: &BlockSpec<'_>) -> Result<DispatchVars> {
    let h = spec.demand.first().map_or(net.horizon, |d| d.len());
    let dt = net.step_hours;
    let tag = &spec.tag;
    let mut cost = Lin::default();
    let mut p = Vec::with_capacity(net.generators.len());
    for (g, gen) in net.generators.iter().enumerate() {
        let row: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("p{tag}_g{}_t{}", gen.id, t + spec.t0), 0.0, gen.p_max))
            .collect::<std::result::Result<_, _>>()?;
        for t in 0..h {
            cost.var(row[t], gen.marginal_cost * dt);
            Lin::default()
                .var(row[t], 1.0)
                .switch(spec.gen_on, g, t, -gen.p_min)
                .emit(m, format!("pmin{tag}_g{}_t{}", gen.id, t + spec.t0), Sense::Ge, 0.0)?;
            Lin::default()
                .var(row[t], 1.0)
                .switch(spec.gen_on, g, t, -gen.p_max)
                .emit(m, format!("pmax{tag}_g{}_t{}", gen.id, t + spec.t0), Sense::Le, 0.0)?;
        }
        // p_aux[t] = p[t] - pmax z[t]; ramp rows bound p_aux[t+1] - p_aux[t]
        let ramp = |m: &mut MilpModel, prev: Option<usize>, prior: f64, t: usize| -> Result<()> {
            let mut e = Lin::default();
            e.var(row[t], 1.0).switch(spec.gen_on, g, t, -gen.p_max);
            match prev {
                Some(s) => {
                    e.var(row[s], -1.0).switch(spec.gen_on, g, s, gen.p_max);
                }
                None => e.constant -= prior,
            }
            let name = format!("{tag}_g{}_t{}", gen.id, t + spec.t0);
            e.emit(m, format!("rampdn{name}"), Sense::Ge, gen.ramp_down)?;
            e.emit(m, format!("rampup{name}"), Sense::Le, gen.ramp_up)
        };
        if let Some(prior) = spec.prior_aux {
            if h > 0 {
                ramp(m, None, prior[g], 0)?;
            }
        }
        for t in 1..h {
            ramp(m, Some(t - 1), 0.0, t)?;
        }
        p.push(row);
    }

    let nb = net.buses.len();
    let reference = net.bus_index(net.reference_bus());
    let mut theta = Vec::with_capacity(nb);
    for (i, bus) in net.buses.iter().enumerate() {
        let bound = if i == reference { 0.0 } else { spec.theta_bound };
        theta.push(
            (0..h)
                .map(|t| m.add_continuous(format!("theta{tag}_b{}_t{}", bus.id, t + spec.t0), -bound, bound))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        );
    }

    let big_m = 2.0 * spec.theta_bound;
    let mut flow = Vec::with_capacity(net.lines.len());
    for (l, line) in net.lines.iter().enumerate() {
        let (i, j) = (net.bus_index(line.from_bus), net.bus_index(line.to_bus));
        let b = line.susceptance;
        let row: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("f{tag}_l{}_t{}", line.id, t + spec.t0), line.flow_min, line.flow_max))
            .collect::<std::result::Result<_, _>>()?;
        for t in 0..h {
            let name = format!("{tag}_l{}_t{}", line.id, t + spec.t0);
            // f - B(th_i - th_j) within +-B M (1 - z)
            let mut e = Lin::default();
            e.var(row[t], 1.0).var(theta[i][t], -b).var(theta[j][t], b);
            let mut up = e.clone();
            up.switch(spec.line_on, l, t, b * big_m);
            up.emit(m, format!("flowub{name}"), Sense::Le, b * big_m)?;
            let mut lo = e;
            lo.switch(spec.line_on, l, t, -b * big_m);
            lo.emit(m, format!("flowlb{name}"), Sense::Ge, -b * big_m)?;
            Lin::default()
                .var(row[t], 1.0)
                .switch(spec.line_on, l, t, -line.flow_max)
                .emit(m, format!("thermub{name}"), Sense::Le, 0.0)?;
            Lin::default()
                .var(row[t], 1.0)
                .switch(spec.line_on, l, t, -line.flow_min)
                .emit(m, format!("thermlb{name}"), Sense::Ge, 0.0)?;
        }
        flow.push(row);
    }

    let mut served = Vec::with_capacity(net.demands.len());
    for (d, dem) in net.demands.iter().enumerate() {
        let row: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("x{tag}_d{}_t{}", dem.id, t + spec.t0), 0.0, 1.0))
            .collect::<std::result::Result<_, _>>()?;
        for t in 0..h {
            let load = spec.demand[d][t];
            cost.constant += dem.voll * load * dt;
            cost.var(row[t], -dem.voll * load * dt);
        }
        served.push(row);
    }

    let mut spill = Vec::new();
    if let Some(pen) = spec.spill_penalty {
        for bus in &net.buses {
            let row: Vec<VarId> = (0..h)
                .map(|t| m.add_continuous(format!("spill{tag}_b{}_t{}", bus.id, t + spec.t0), 0.0, f64::INFINITY))
                .collect::<std::result::Result<_, _>>()?;
            for &v in &row {
                cost.var(v, pen * dt);
            }
            spill.push(row);
        }
    }

    for (i, bus) in net.buses.iter().enumerate() {
        for t in 0..h {
            let mut e = Lin::default();
            for (g, gen) in net.generators.iter().enumerate() {
                if net.bus_index(gen.bus) == i {
                    e.var(p[g][t], 1.0);
                }
            }
            for (l, line) in net.lines.iter().enumerate() {
                if net.bus_index(line.from_bus) == i {
                    e.var(flow[l][t], -1.0);
                }
                if net.bus_index(line.to_bus) == i {
                    e.var(flow[l][t], 1.0);
                }
            }
            for (d, dem) in net.demands.iter().enumerate() {
                if net.bus_index(dem.bus) == i {
                    e.var(served[d][t], -spec.demand[d][t]);
                }
            }
            if !spill.is_empty() {
                e.var(spill[i][t], -1.0);
            }
            e.emit(m, format!("bal{tag}_b{}_t{}", bus.id, t + spec.t0), Sense::Eq, 0.0)?;
        }
    }

    for &(v, a) in &cost.terms {
        m.add_objective_coef(v, spec.weight * a);
    }
    m.add_objective_constant(spec.weight * cost.constant);
    Ok(DispatchVars {
        p,
        flow,
        theta,
        served,
        spill,
        cost,
    })
}

/// Index of every variable in a built day-ahead model.
#[derive(Clone, Debug)]
pub struct VarIndex {
    pub gen_on: Vec<Vec<VarId>>,
    pub gen_up: Vec<Vec<VarId>>,
    pub gen_dn: Vec<Vec<VarId>>,
    pub line_on: Vec<Vec<VarId>>,
    pub risk_slack: Vec<VarId>,
    pub nu: Option<VarId>,
    pub gamma: Vec<VarId>,
    pub(crate) blocks: Vec<DispatchVars>,
}

pub struct DayAheadModel {
    pub model: MilpModel,
    pub vars: VarIndex,
    /// Risk coefficients the budget was built from (expected over scenarios).
    pub line_risk: Vec<LineRisk>,
    pub budget_rows: Vec<String>,
}

/// Budget coefficients: expected ignition probabilities (and raw metric
/// values for WFPI budgets) across the scenario set.
pub fn expected_line_risk(net: &PowerNetwork, scenarios: &ScenarioSet) -> Result<Vec<LineRisk>> {
    let e = expected_scenario(scenarios);
    net.lines
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let mut lr = LineRisk::constant(line.id, e.line_risk[l], net.horizon)?;
            lr.metric_value = if e.line_metric.is_empty() { e.line_risk[l] } else { e.line_metric[l] };
            Ok(lr)
        })
        .collect()
}

/// Adds the risk-budget rows for every step. Zero-risk lines never enter a
/// log-probability sum.
pub fn emit_risk_budget(
    m: &mut MilpModel,
    line_on: &[Vec<VarId>],
    lines: &[LineRisk],
    budget: &RiskBudget,
    horizon: usize,
) -> Result<(Vec<VarId>, Vec<String>)> {
    budget.validate(lines.len())?;
    let mut slack = Vec::new();
    let mut names = Vec::new();
    for t in 0..horizon {
        let mut e = Lin::default();
        let (sense, rhs, name) = match *budget {
            RiskBudget::None => continue,
            RiskBudget::WfpiSum { r_tol } => {
                for (l, lr) in lines.iter().enumerate() {
                    e.var(line_on[l][t], lr.metric_value);
                }
                (Sense::Le, r_tol, format!("wfpisum_t{t}"))
            }
            RiskBudget::NMinusK { k } => {
                for row in line_on {
                    e.var(row[t], 1.0);
                }
                (Sense::Le, (lines.len() - k) as f64, format!("nmk_t{t}"))
            }
            RiskBudget::WfpiSlack { r_tol, r_slack_max, .. } => {
                for (l, lr) in lines.iter().enumerate() {
                    e.var(line_on[l][t], lr.metric_value);
                }
                let s = m.add_continuous(format!("rslack_t{t}"), 0.0, r_slack_max)?;
                e.var(s, -1.0);
                slack.push(s);
                (Sense::Eq, r_tol, format!("wfpislack_t{t}"))
            }
            RiskBudget::LogWip { pi_tol, damaged_term } => {
                for (l, lr) in lines.iter().enumerate() {
                    if lr.pi[t] <= 0.0 {
                        continue;
                    }
                    let (lp, lq) = (lr.log_pi[t], lr.log_one_minus_pi[t]);
                    e.var(line_on[l][t], lq);
                    match damaged_term {
                        DamagedTerm::Cumulative => {
                            e.constant += lp;
                            e.var(line_on[l][t], -lp);
                        }
                        DamagedTerm::ShutdownStep => {
                            if t == 0 {
                                e.constant += lp;
                            } else {
                                e.var(line_on[l][t - 1], lp);
                            }
                            e.var(line_on[l][t], -lp);
                        }
                    }
                }
                (Sense::Le, pi_tol.ln(), format!("logwip_t{t}"))
            }
        };
        e.emit(m, name.clone(), sense, rhs)?;
        names.push(name);
    }
    Ok((slack, names))
}

/// Left-hand side of the log-probability budget at step `t` for a fixed
/// energization pattern.
pub fn log_budget_lhs(lines: &[LineRisk], line_on: &[Vec<bool>], t: usize, mode: DamagedTerm) -> f64 {
    let mut lhs = 0.0;
    for (l, lr) in lines.iter().enumerate() {
        if lr.pi[t] <= 0.0 {
            continue;
        }
        let on = line_on[l][t];
        let dark = match mode {
            DamagedTerm::Cumulative => !on,
            DamagedTerm::ShutdownStep => (t == 0 || line_on[l][t - 1]) && !on,
        };
        if dark {
            lhs += lr.log_pi[t];
        }
        if on {
            lhs += lr.log_one_minus_pi[t];
        }
    }
    lhs
}

/// The budget in its original product form: the probability of the
/// damage pattern must not exceed `pi_tol`.
pub fn product_budget_holds(lines: &[LineRisk], line_on: &[Vec<bool>], t: usize, mode: DamagedTerm, pi_tol: f64) -> bool {
    let mut prob = 1.0;
    for (l, lr) in lines.iter().enumerate() {
        let pi = lr.pi[t];
        if pi <= 0.0 {
            continue;
        }
        let on = line_on[l][t];
        let dark = match mode {
            DamagedTerm::Cumulative => !on,
            DamagedTerm::ShutdownStep => (t == 0 || line_on[l][t - 1]) && !on,
        };
        if dark {
            prob *= pi;
        }
        if on {
            prob *= 1.0 - pi;
        }
    }
    prob <= pi_tol
}

fn cost_upper_bound(net: &PowerNetwork, scenarios: &ScenarioSet) -> f64 {
    let h = net.horizon as f64;
    let dt = net.step_hours;
    let uc: f64 = net.generators.iter().map(|g| (g.startup_cost + g.shutdown_cost) * h).sum();
    let oc: f64 = net.generators.iter().map(|g| g.marginal_cost * g.p_max * dt * h).sum();
    let voll = scenarios
        .scenarios
        .iter()
        .map(|s| {
            net.demands
                .iter()
                .zip(&s.demand)
                .map(|(d, row)| d.voll * dt * row.iter().sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    uc + oc + voll + 1.0
}

/// Builds the day-ahead MILP. With `cvar` absent or `beta = 0` the
/// objective is the expected cost; otherwise the mean-CVaR blend.
pub fn build_day_ahead(
    net: &PowerNetwork,
    scenarios: &ScenarioSet,
    budget: &RiskBudget,
    cvar_cfg: Option<CvarConfig>,
    opts: &FormulationOptions,
) -> Result<DayAheadModel> {
    scenarios.validate(net)?;
    budget.validate(net.lines.len())?;
    if let Some(c) = cvar_cfg {
        if !(0.0..=1.0).contains(&c.beta) || !(0.0..1.0).contains(&c.epsilon) {
            return Err(PspsError::Config(format!("invalid CVaR weights beta={} epsilon={}", c.beta, c.epsilon)));
        }
        if c.beta > 0.0 && scenarios.len() < 2 {
            return Err(PspsError::Config("mean-CVaR objective needs at least two scenarios".into()));
        }
    }
    if !(opts.theta_bound > 0.0) {
        return Err(PspsError::Config("theta_bound must be positive".into()));
    }
    let h = net.horizon;
    let mut m = MilpModel::new();

    let mut gen_on = Vec::new();
    let mut gen_up = Vec::new();
    let mut gen_dn = Vec::new();
    for gen in &net.generators {
        let mk = |m: &mut MilpModel, p: &str| -> Result<Vec<VarId>> {
            (0..h)
                .map(|t| Ok(m.add_binary(format!("{p}_g{}_t{t}", gen.id))?))
                .collect()
        };
        gen_on.push(mk(&mut m, "z")?);
        gen_up.push(mk(&mut m, "zup")?);
        gen_dn.push(mk(&mut m, "zdn")?);
    }
    let line_on: Vec<Vec<VarId>> = net
        .lines
        .iter()
        .map(|line| {
            (0..h)
                .map(|t| Ok(m.add_binary(format!("zl_l{}_t{t}", line.id))?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // unit commitment logic; the window [t - MinUp + 1, t] makes a unit
    // started at t' stay on through t' + MinUp - 1
    for (g, gen) in net.generators.iter().enumerate() {
        for t in 0..h {
            let id = gen.id;
            let mut e = Lin::default();
            e.var(gen_on[g][t], 1.0).var(gen_up[g][t], -1.0).var(gen_dn[g][t], 1.0);
            if t == 0 {
                e.constant -= gen.initially_on as u8 as f64;
            } else {
                e.var(gen_on[g][t - 1], -1.0);
            }
            e.emit(&mut m, format!("uctrans_g{id}_t{t}"), Sense::Eq, 0.0)?;

            let mut up = Lin::default();
            up.var(gen_on[g][t], 1.0);
            for s in (t + 1).saturating_sub(gen.min_up)..=t {
                up.var(gen_up[g][s], -1.0);
            }
            up.emit(&mut m, format!("minup_g{id}_t{t}"), Sense::Ge, 0.0)?;

            let mut dn = Lin::default();
            dn.var(gen_on[g][t], 1.0);
            for s in (t + 1).saturating_sub(gen.min_down)..=t {
                dn.var(gen_dn[g][s], 1.0);
            }
            dn.emit(&mut m, format!("mindn_g{id}_t{t}"), Sense::Le, 1.0)?;
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        for t in 1..h {
            m.add_constraint(
                format!("persist_l{}_t{t}", line.id),
                &[(line_on[l][t - 1], 1.0), (line_on[l][t], -1.0)],
                Sense::Ge,
                0.0,
            )?;
        }
    }

    let line_risk = expected_line_risk(net, scenarios)?;
    if opts.energize_zero_risk {
        for (row, lr) in line_on.iter().zip(&line_risk) {
            if lr.is_zero_risk() {
                for &v in row {
                    m.fix(v, 1.0);
                }
            }
        }
    }
    if let Some(fixed) = &opts.fixed_lines {
        if fixed.len() != line_on.len() || fixed.iter().any(|r| r.len() != h) {
            return Err(PspsError::DimensionMismatch("fixed line pattern does not match the network".into()));
        }
        for (row, vals) in line_on.iter().zip(fixed) {
            for (&v, &b) in row.iter().zip(vals) {
                m.fix(v, b as u8 as f64);
            }
        }
    }
    let (risk_slack, budget_rows) = emit_risk_budget(&mut m, &line_on, &line_risk, budget, h)?;
    if let RiskBudget::WfpiSlack { penalty, .. } = budget {
        for &s in &risk_slack {
            m.set_objective_coef(s, *penalty);
        }
    }

    // commitment cost, shared by all scenarios
    let mut uc = Lin::default();
    for (g, gen) in net.generators.iter().enumerate() {
        for t in 0..h {
            uc.var(gen_up[g][t], gen.startup_cost).var(gen_dn[g][t], gen.shutdown_cost);
        }
    }
    let beta = cvar_cfg.map_or(0.0, |c| c.beta);
    let use_cvar = beta > 0.0;
    for &(v, a) in &uc.terms {
        m.add_objective_coef(v, a);
    }

    let mut blocks = Vec::with_capacity(scenarios.len());
    for s in &scenarios.scenarios {
        let spec = BlockSpec {
            tag: format!("_w{}", s.id),
            demand: &s.demand,
            gen_on: Switch::Var(&gen_on),
            line_on: Switch::Var(&line_on),
            weight: (1.0 - beta) * s.probability,
            theta_bound: opts.theta_bound,
            prior_aux: None,
            spill_penalty: None,
            t0: 0,
        };
        blocks.push(add_dispatch_block(&mut m, net, &spec)?);
    }
    // uc enters the mean part with weight (1 - beta) in total; the CVaR
    // part carries it through each Pi_w
    if use_cvar {
        for &(v, a) in &uc.terms {
            m.add_objective_coef(v, -beta * a);
        }
    }

    let (mut nu, mut gamma) = (None, Vec::new());
    if use_cvar {
        let c = cvar_cfg.unwrap();
        let ub = cost_upper_bound(net, scenarios);
        let nu_v = m.add_continuous("nu", 0.0, ub)?;
        m.set_objective_coef(nu_v, beta);
        for (s, block) in scenarios.scenarios.iter().zip(&blocks) {
            let g = m.add_continuous(format!("gamma_w{}", s.id), 0.0, ub)?;
            m.set_objective_coef(g, beta * s.probability / (1.0 - c.epsilon));
            // gamma >= Pi - nu
            let mut e = Lin::default();
            e.var(g, 1.0).var(nu_v, 1.0);
            for &(v, a) in uc.terms.iter().chain(&block.cost.terms) {
                e.var(v, -a);
            }
            e.emit(&mut m, format!("cvar_w{}", s.id), Sense::Ge, block.cost.constant)?;
            gamma.push(g);
        }
        nu = Some(nu_v);
    }

    let vars = VarIndex {
        gen_on,
        gen_up,
        gen_dn,
        line_on,
        risk_slack,
        nu,
        gamma,
        blocks,
    };
    if let Some(plan) = &opts.fixed_plan {
        fix_plan(&mut m, &vars, plan)?;
    }
    if let Some(plan) = &opts.start_plan {
        start_from_plan(&mut m, &vars, plan)?;
    }
    Ok(DayAheadModel {
        model: m,
        vars,
        line_risk,
        budget_rows,
    })
}

fn check_plan_dims(vars: &VarIndex, plan: &CommitmentPlan) -> Result<()> {
    let dims_ok = plan.gen_on.len() == vars.gen_on.len()
        && plan.line_on.len() == vars.line_on.len()
        && plan.horizon() == vars.gen_on.first().or(vars.line_on.first()).map_or(0, |v| v.len());
    if !dims_ok {
        return Err(PspsError::DimensionMismatch("plan does not match the network".into()));
    }
    Ok(())
}

fn start_from_plan(m: &mut MilpModel, vars: &VarIndex, plan: &CommitmentPlan) -> Result<()> {
    check_plan_dims(vars, plan)?;
    let mut start = Vec::new();
    for (ids, vals) in [
        (&vars.gen_on, &plan.gen_on),
        (&vars.gen_up, &plan.gen_up),
        (&vars.gen_dn, &plan.gen_dn),
        (&vars.line_on, &plan.line_on),
    ] {
        for (row, vrow) in ids.iter().zip(vals) {
            start.extend(row.iter().copied().zip(vrow.iter().copied()));
        }
    }
    m.set_start(start);
    Ok(())
}

fn fix_plan(m: &mut MilpModel, vars: &VarIndex, plan: &CommitmentPlan) -> Result<()> {
    check_plan_dims(vars, plan)?;
    let fix = |m: &mut MilpModel, ids: &[Vec<VarId>], vals: &[Vec<bool>]| {
        for (row, vrow) in ids.iter().zip(vals) {
            for (&v, &b) in row.iter().zip(vrow) {
                m.fix(v, b as u8 as f64);
            }
        }
    };
    fix(m, &vars.gen_on, &plan.gen_on);
    fix(m, &vars.gen_up, &plan.gen_up);
    fix(m, &vars.gen_dn, &plan.gen_dn);
    fix(m, &vars.line_on, &plan.line_on);
    Ok(())
}

impl DayAheadModel {
    pub fn extract_plan(&self, x: &[f64]) -> CommitmentPlan {
        let b = |ids: &[Vec<VarId>]| -> Vec<Vec<bool>> {
            ids.iter().map(|row| row.iter().map(|v| x[v.0] > 0.5).collect()).collect()
        };
        let line_on = b(&self.vars.line_on);
        let line_dn = line_on
            .iter()
            .map(|on| (0..on.len()).map(|t| (t == 0 || on[t - 1]) && !on[t]).collect())
            .collect();
        let h = self.vars.gen_on.first().or(self.vars.line_on.first()).map_or(0, |v| v.len());
        let risk_slack = if self.vars.risk_slack.is_empty() {
            vec![0.0; h]
        } else {
            self.vars.risk_slack.iter().map(|v| x[v.0]).collect()
        };
        CommitmentPlan {
            gen_on: b(&self.vars.gen_on),
            gen_up: b(&self.vars.gen_up),
            gen_dn: b(&self.vars.gen_dn),
            line_on,
            line_dn,
            risk_slack,
        }
    }

    pub fn extract_dispatch(&self, net: &PowerNetwork, plan: &CommitmentPlan, x: &[f64]) -> DispatchSolution {
        DispatchSolution {
            scenarios: self
                .vars
                .blocks
                .iter()
                .map(|b| extract_block(net, b, &plan.gen_on, x))
                .collect(),
        }
    }
}

pub(crate) fn extract_block(net: &PowerNetwork, b: &DispatchVars, gen_on: &[Vec<bool>], x: &[f64]) -> ScenarioDispatch {
    let vals = |ids: &[Vec<VarId>]| -> Vec<Vec<f64>> { ids.iter().map(|r| r.iter().map(|v| x[v.0]).collect()).collect() };
    let p = vals(&b.p);
    let p_aux = p
        .iter()
        .enumerate()
        .map(|(g, row)| {
            row.iter()
                .enumerate()
                .map(|(t, &pv)| pv - net.generators[g].p_max * (gen_on[g][t] as u8 as f64))
                .collect()
        })
        .collect();
    ScenarioDispatch {
        p,
        p_aux,
        flow: vals(&b.flow),
        theta: vals(&b.theta),
        served: vals(&b.served),
        spill: vals(&b.spill),
    }
}

/// Commitment cost of a plan.
pub fn commitment_cost(net: &PowerNetwork, plan: &CommitmentPlan) -> f64 {
    let mut uc = 0.0;
    for (g, gen) in net.generators.iter().enumerate() {
        for t in 0..plan.horizon() {
            if plan.gen_up[g][t] {
                uc += gen.startup_cost;
            }
            if plan.gen_dn[g][t] {
                uc += gen.shutdown_cost;
            }
        }
    }
    uc
}

/// Production and lost-load cost of one scenario's dispatch.
pub fn dispatch_costs(net: &PowerNetwork, d: &ScenarioDispatch, demand: &[Vec<f64>]) -> (f64, f64) {
    let dt = net.step_hours;
    let oc: f64 = net
        .generators
        .iter()
        .zip(&d.p)
        .map(|(g, row)| g.marginal_cost * dt * row.iter().sum::<f64>())
        .sum();
    let voll: f64 = net
        .demands
        .iter()
        .enumerate()
        .map(|(k, dem)| {
            (0..demand[k].len())
                .map(|t| dem.voll * (1.0 - d.served[k][t]) * demand[k][t] * dt)
                .sum::<f64>()
        })
        .sum();
    (oc, voll)
}

pub fn evaluate_costs(
    net: &PowerNetwork,
    plan: &CommitmentPlan,
    dispatch: &DispatchSolution,
    scenarios: &ScenarioSet,
    budget: &RiskBudget,
    cvar_cfg: Option<CvarConfig>,
) -> Result<CostBreakdown> {
    if dispatch.scenarios.len() != scenarios.len()
        || plan.gen_on.len() != net.generators.len()
        || plan.line_on.len() != net.lines.len()
    {
        return Err(PspsError::DimensionMismatch(format!(
            "{} dispatch blocks for {} scenarios",
            dispatch.scenarios.len(),
            scenarios.len()
        )));
    }
    let uc = commitment_cost(net, plan);
    let (mut oc, mut voll) = (0.0, 0.0);
    let mut per = Vec::with_capacity(scenarios.len());
    for (s, d) in scenarios.scenarios.iter().zip(&dispatch.scenarios) {
        if d.p.len() != net.generators.len() || d.served.len() != net.demands.len() {
            return Err(PspsError::DimensionMismatch(format!("scenario {} dispatch", s.id)));
        }
        let (o, v) = dispatch_costs(net, d, &s.demand);
        oc += s.probability * o;
        voll += s.probability * v;
        per.push(uc + o + v);
    }
    let slack_penalty = match budget {
        RiskBudget::WfpiSlack { penalty, .. } => penalty * plan.risk_slack.iter().sum::<f64>(),
        _ => 0.0,
    };
    let probs: Vec<f64> = scenarios.scenarios.iter().map(|s| s.probability).collect();
    let mean: f64 = per.iter().zip(&probs).map(|(c, p)| c * p).sum();
    let cfg = cvar_cfg.unwrap_or(CvarConfig::new(0.0, default_epsilon()));
    let cv = cvar(&per, &probs, cfg.epsilon);
    Ok(CostBreakdown {
        uc,
        oc,
        voll,
        slack_penalty,
        total: uc + oc + voll + slack_penalty,
        per_scenario: per,
        mean,
        cvar: cv,
        mean_cvar_objective: (1.0 - cfg.beta) * mean + cfg.beta * cv + slack_penalty,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
    })
}

#[derive(Clone, Debug)]
pub struct DayAheadSolution {
    pub plan: CommitmentPlan,
    pub dispatch: DispatchSolution,
    pub costs: CostBreakdown,
    /// Objective reported by the solver.
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: f64,
    pub nodes: usize,
    pub line_risk: Vec<LineRisk>,
}

pub fn solve_day_ahead(
    net: &PowerNetwork,
    scenarios: &ScenarioSet,
    budget: &RiskBudget,
    cvar_cfg: Option<CvarConfig>,
    limits: &Limits,
    opts: &FormulationOptions,
) -> Result<DayAheadSolution> {
    let built = build_day_ahead(net, scenarios, budget, cvar_cfg, opts)?;
    let sol: MilpSolution = solve_milp(&built.model, limits)?;
    match sol.status {
        SolveStatus::Infeasible => {
            let culprit = if *budget != RiskBudget::None && opts.fixed_plan.is_none() {
                let relaxed = build_day_ahead(net, scenarios, &RiskBudget::None, cvar_cfg, opts)?;
                let r = solve_milp(&relaxed.model, &Limits::default().with_max_nodes(1))?;
                (r.status != SolveStatus::Infeasible).then(|| budget.label())
            } else {
                None
            };
            return Err(PspsError::Infeasible { budget: culprit });
        }
        s if !s.has_solution() => return Err(PspsError::Solver(s)),
        _ => {}
    }
    let plan = built.extract_plan(&sol.values);
    let dispatch = built.extract_dispatch(net, &plan, &sol.values);
    let costs = evaluate_costs(net, &plan, &dispatch, scenarios, budget, cvar_cfg)?;
    Ok(DayAheadSolution {
        plan,
        dispatch,
        costs,
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        nodes: sol.nodes,
        line_risk: built.line_risk,
    })
}

/// Largest absolute bus-balance residual of a dispatch.
pub fn balance_residual(net: &PowerNetwork, d: &ScenarioDispatch, demand: &[Vec<f64>]) -> f64 {
    let h = d.p.first().or(d.served.first()).map_or(0, |r| r.len());
    let mut worst: f64 = 0.0;
    for i in 0..net.buses.len() {
        for t in 0..h {
            let mut r = 0.0;
            for (g, gen) in net.generators.iter().enumerate() {
                if net.bus_index(gen.bus) == i {
                    r += d.p[g][t];
                }
            }
            for (l, line) in net.lines.iter().enumerate() {
                if net.bus_index(line.from_bus) == i {
                    r -= d.flow[l][t];
                }
                if net.bus_index(line.to_bus) == i {
                    r += d.flow[l][t];
                }
            }
            for (k, dem) in net.demands.iter().enumerate() {
                if net.bus_index(dem.bus) == i {
                    r -= d.served[k][t] * demand[k][t];
                }
            }
            if !d.spill.is_empty() {
                r -= d.spill[i][t];
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

pub fn write_plan_csv(net: &PowerNetwork, plan: &CommitmentPlan, dir: &Path) -> Result<()> {
    let write = |name: &str, header: &str, rows: Vec<String>| -> Result<()> {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| PspsError::io(&path, e))?;
        let mut text = String::from(header);
        text.push('\n');
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(|e| PspsError::io(&path, e))
    };
    let mut rows = Vec::new();
    for (g, gen) in net.generators.iter().enumerate() {
        for t in 0..plan.horizon() {
            rows.push(format!(
                "{},{},{},{},{}",
                gen.id, t, plan.gen_on[g][t] as u8, plan.gen_up[g][t] as u8, plan.gen_dn[g][t] as u8
            ));
        }
    }
    write("commitments.csv", "generator,step,on,startup,shutdown", rows)?;
    let mut rows = Vec::new();
    for (l, line) in net.lines.iter().enumerate() {
        for t in 0..plan.horizon() {
            rows.push(format!("{},{},{},{}", line.id, t, plan.line_on[l][t] as u8, plan.line_dn[l][t] as u8));
        }
    }
    write("energizations.csv", "line,step,on,shutdown", rows)
}

pub fn write_dispatch_csv(net: &PowerNetwork, dispatch: &DispatchSolution, scenarios: &ScenarioSet, path: &Path) -> Result<()> {
    let mut text = String::from("scenario,generator,step,p,p_aux\n");
    for (s, d) in scenarios.scenarios.iter().zip(&dispatch.scenarios) {
        for (g, gen) in net.generators.iter().enumerate() {
            for t in 0..d.p[g].len() {
                text.push_str(&format!("{},{},{},{},{}\n", s.id, gen.id, t, d.p[g][t], d.p_aux[g][t]));
            }
        }
    }
    std::fs::write(path, text).map_err(|e| PspsError::io(path, e))
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<CommitmentPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PspsError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PspsError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn save_plan(plan: &CommitmentPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(plan).expect("plan serializes");
    std::fs::write(path, text + "\n").map_err(|e| PspsError::io(path, e))
}
