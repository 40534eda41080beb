//! CVaR, value-of-stochastic-solution metrics, and wildfire-metric validation.

use std::f64::consts::PI;

use psps_milp::{solve_lp, Limits, MilpModel, Sense, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PspsError, Result};
use crate::formulation::{
    solve_day_ahead, CommitmentPlan, CvarConfig, DayAheadSolution, FormulationOptions, RiskBudget,
};
use crate::grid::PowerNetwork;
use crate::scenario::{expected_scenario, ScenarioSet};

/// CVaR at level `epsilon` of a discrete cost distribution: the mean of the
/// worst `1 - epsilon` probability mass.
pub fn cvar(costs: &[f64], probs: &[f64], epsilon: f64) -> f64 {
    assert_eq!(costs.len(), probs.len(), "costs and probabilities differ in length");
    assert!((0.0..1.0).contains(&epsilon), "epsilon must lie in [0, 1)");
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
    let tail = 1.0 - epsilon;
    let mut remaining = tail;
    let mut acc = 0.0;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let w = probs[i].min(remaining);
        acc += w * costs[i];
        remaining -= w;
    }
    // rounding can leave a sliver of mass when the tail ends at a breakpoint
    if remaining > 0.0 {
        if let Some(&last) = order.last() {
            acc += remaining * costs[last];
        }
    }
    acc / tail
}

/// The same quantity from the LP `min nu + sum p_w g_w / (1 - eps)`,
/// `g_w >= c_w - nu`, `g_w >= 0`.
pub fn cvar_lp(costs: &[f64], probs: &[f64], epsilon: f64) -> Result<f64> {
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut m = MilpModel::new();
    let nu = m.add_continuous("nu", lo, hi)?;
    m.set_objective_coef(nu, 1.0);
    for (w, (&c, &p)) in costs.iter().zip(probs).enumerate() {
        let g = m.add_continuous(format!("g{w}"), 0.0, f64::INFINITY)?;
        m.set_objective_coef(g, p / (1.0 - epsilon));
        m.add_constraint(format!("tail{w}"), &[(g, 1.0), (nu, 1.0)], Sense::Ge, c)?;
    }
    let s = solve_lp(&m)?;
    match s.status {
        SolveStatus::Optimal => Ok(s.objective),
        other => Err(PspsError::Solver(other)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRiskValue {
    pub mean: f64,
    pub cvar: f64,
    pub combined: f64,
    pub beta: f64,
    pub epsilon: f64,
}

pub fn mean_risk(costs: &[f64], probs: &[f64], cfg: CvarConfig) -> MeanRiskValue {
    let mean: f64 = costs.iter().zip(probs).map(|(c, p)| c * p).sum();
    let cv = cvar(costs, probs, cfg.epsilon);
    MeanRiskValue {
        mean,
        cvar: cv,
        combined: (1.0 - cfg.beta) * mean + cfg.beta * cv,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VssReport {
    pub ev: Option<f64>,
    pub mrws: Option<f64>,
    pub mrrp: Option<f64>,
    pub mrev: Option<f64>,
    pub mrvpi: Option<f64>,
    pub mrvss: Option<f64>,
    pub beta: f64,
    pub epsilon: f64,
    /// Components that had no feasible solution.
    pub infeasible: Vec<String>,
    #[serde(skip)]
    pub ev_plan: Option<CommitmentPlan>,
    #[serde(skip)]
    pub rp_plan: Option<CommitmentPlan>,
    #[serde(skip)]
    pub solutions: Vec<DayAheadSolution>,
}

impl VssReport {
    /// `MRWS <= MRRP <= MREV` within `tol`; `None` when a component is missing.
    pub fn ordering_holds(&self, tol: f64) -> Option<bool> {
        let (ws, rp, ev) = (self.mrws?, self.mrrp?, self.mrev?);
        Some(ws <= rp + tol && rp <= ev + tol)
    }
}

fn optional(res: Result<DayAheadSolution>, label: &str, infeasible: &mut Vec<String>) -> Result<Option<DayAheadSolution>> {
    match res {
        Ok(s) => Ok(Some(s)),
        Err(PspsError::Infeasible { .. }) => {
            infeasible.push(label.to_string());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// EV, wait-and-see, recourse-problem and expected-EV values for a
/// mean-CVaR two-stage problem.
pub fn compute_vss_vpi(
    net: &PowerNetwork,
    scenarios: &ScenarioSet,
    budget: &RiskBudget,
    cfg: CvarConfig,
    limits: &Limits,
    opts: &FormulationOptions,
) -> Result<VssReport> {
    if scenarios.len() < 2 {
        return Err(PspsError::Config("value metrics need at least two scenarios".into()));
    }
    let mut infeasible = Vec::new();
    let mut solutions = Vec::new();
    let expected = ScenarioSet::single(expected_scenario(scenarios));
    let ev_sol = optional(solve_day_ahead(net, &expected, budget, None, limits, opts), "EV", &mut infeasible)?;

    // wait-and-see: each scenario solved with perfect foresight, risk
    // coefficients still taken from the full set so the budget is shared
    let mut ws_costs = Vec::with_capacity(scenarios.len());
    let mut ws_ok = true;
    for s in &scenarios.scenarios {
        let mut one = ScenarioSet::single(s.clone());
        let exp = expected_scenario(scenarios);
        one.scenarios[0].line_risk = exp.line_risk;
        one.scenarios[0].line_metric = exp.line_metric;
        match optional(solve_day_ahead(net, &one, budget, None, limits, opts), &format!("WS scenario {}", s.id), &mut infeasible)? {
            Some(sol) => {
                ws_costs.push(sol.objective);
                solutions.push(sol);
            }
            None => ws_ok = false,
        }
    }
    let probs: Vec<f64> = scenarios.scenarios.iter().map(|s| s.probability).collect();
    let mrws = ws_ok.then(|| mean_risk(&ws_costs, &probs, cfg).combined);

    let rp_sol = optional(solve_day_ahead(net, scenarios, budget, Some(cfg), limits, opts), "RP", &mut infeasible)?;
    let mrrp = rp_sol.as_ref().map(|s| s.objective);

    let mut mrev = None;
    if let Some(ev) = &ev_sol {
        let fixed = FormulationOptions {
            fixed_plan: Some(ev.plan.clone()),
            ..opts.clone()
        };
        if let Some(eev) = optional(solve_day_ahead(net, scenarios, budget, Some(cfg), limits, &fixed), "EEV", &mut infeasible)? {
            mrev = Some(eev.objective);
            solutions.push(eev);
        }
    }
    let mrvpi = match (mrrp, mrws) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    let mrvss = match (mrev, mrrp) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(VssReport {
        ev: ev_sol.as_ref().map(|s| s.objective),
        mrws,
        mrrp,
        mrev,
        mrvpi,
        mrvss,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
        infeasible,
        ev_plan: ev_sol.map(|s| s.plan),
        rp_plan: rp_sol.map(|s| s.plan),
        solutions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub mae_by_bus: Vec<f64>,
}

/// Mean absolute error between each bus's monthly WIP series and the
/// monthly OWIP series of its assigned cluster.
pub fn mae_by_bus(wip: &[Vec<f64>], owip: &[Vec<f64>], assignment: &[usize]) -> Result<Vec<f64>> {
    if wip.len() != assignment.len() {
        return Err(PspsError::DimensionMismatch(format!(
            "{} bus series for {} assignments",
            wip.len(),
            assignment.len()
        )));
    }
    wip.iter()
        .zip(assignment)
        .map(|(w, &k)| {
            let o = owip
                .get(k)
                .ok_or_else(|| PspsError::DimensionMismatch(format!("no OWIP series for cluster {k}")))?;
            if w.len() != 12 || o.len() != 12 {
                return Err(PspsError::DimensionMismatch("series must hold 12 monthly values".into()));
            }
            Ok(w.iter().zip(o).map(|(a, b)| (a - b).abs()).sum::<f64>() / 12.0)
        })
        .collect()
}

/// Percent reduction in MAE when moving from the first metric to the second.
pub fn mae_improvement(mae_first: f64, mae_second: f64) -> f64 {
    100.0 * (mae_first - mae_second) / mae_first
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireRecord {
    pub date: String,
    pub latitude: f64,
    pub longitude: f64,
    pub acres: f64,
}

impl FireRecord {
    /// Month 1..=12 parsed from an ISO date.
    pub fn month(&self) -> Option<usize> {
        self.date.get(5..7)?.parse().ok().filter(|m| (1..=12).contains(m))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    /// (lat, lon) per cluster.
    pub centroids: Vec<(f64, f64)>,
    pub hull_area_km2: Vec<f64>,
}

const KM_PER_DEG: f64 = 111.32;

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn plus_plus(points: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|&p| centers.iter().map(|&c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            // remaining points coincide with centers; take the first unused index
            let next = points
                .iter()
                .find(|p| !centers.contains(p))
                .copied()
                .unwrap_or(points[centers.len() % points.len()]);
            centers.push(next);
            continue;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = points.len() - 1;
        for (i, &w) in d.iter().enumerate() {
            if pick < w {
                chosen = i;
                break;
            }
            pick -= w;
        }
        centers.push(points[chosen]);
    }
    centers
}

fn lloyd(points: &[(f64, f64)], mut centers: Vec<(f64, f64)>) -> (Vec<usize>, Vec<(f64, f64)>, Option<usize>) {
    let k = centers.len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist2(p, centers[a]).total_cmp(&dist2(p, centers[b])).then(a.cmp(&b)))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &p) in points.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s.0 += p.0;
            s.1 += p.1;
            s.2 += 1;
        }
        if let Some(empty) = sums.iter().position(|s| s.2 == 0) {
            return (assign, centers, Some(empty));
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
        }
        if !changed {
            break;
        }
    }
    (assign, centers, None)
}

/// Andrew's monotone chain; returns the hull in counter-clockwise order.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Area in km^2 of the convex hull of (lat, lon) points, projected
/// equirectangularly at their mean latitude.
pub fn hull_area_km2(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mean_lat = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let kx = KM_PER_DEG * (mean_lat * PI / 180.0).cos();
    let xy: Vec<(f64, f64)> = points.iter().map(|&(lat, lon)| (lon * kx, lat * KM_PER_DEG)).collect();
    let hull = convex_hull(&xy);
    if hull.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    twice.abs() / 2.0
}

/// K-means on (lat, lon) with k-means++ seeding.
pub fn kmeans_regions(records: &[FireRecord], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 || records.len() < k {
        return Err(PspsError::Config(format!("need at least k = {k} records, have {}", records.len())));
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.latitude, r.longitude)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // one re-seed is allowed when Lloyd's iteration empties a cluster
    let mut outcome = Err(0);
    for _attempt in 0..2 {
        let (assign, centers, empty) = lloyd(&points, plus_plus(&points, k, &mut rng));
        match empty {
            None => {
                outcome = Ok((assign, centers));
                break;
            }
            Some(c) => outcome = Err(c),
        }
    }
    let (assignment, centroids) = outcome.map_err(PspsError::DegenerateCluster)?;
    let hull_area_km2 = (0..k)
        .map(|c| {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p)
                .collect();
            hull_area_km2(&pts)
        })
        .collect();
    Ok(Clustering {
        assignment,
        centroids,
        hull_area_km2,
    })
}

const DAYS_IN_MONTH: [f64; 12] = [31.0, 28.0, 31.0, 30.0, 31.0, 30.0, 31.0, 31.0, 30.0, 31.0, 30.0, 31.0];

/// Monthly observed ignition probability per km^2 per day.
pub fn owip_histogram(records: &[FireRecord], area_km2: f64, years: usize) -> Result<[f64; 12]> {
    if !(area_km2 > 0.0) {
        return Err(PspsError::ZeroArea);
    }
    if years == 0 {
        return Err(PspsError::Config("years must be at least 1".into()));
    }
    let mut counts = [0usize; 12];
    for r in records {
        if let Some(m) = r.month() {
            counts[m - 1] += 1;
        }
    }
    let mut out = [0.0; 12];
    for m in 0..12 {
        out[m] = counts[m] as f64 / (area_km2 * DAYS_IN_MONTH[m] * years as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvar_examples() {
        let c = [10.0, 20.0, 30.0, 40.0];
        let p = [0.25; 4];
        assert!((cvar(&c, &p, 0.0) - 25.0).abs() < 1e-12);
        assert!((cvar(&c, &p, 0.75) - 40.0).abs() < 1e-12);
        assert!((cvar(&c, &p, 0.5) - 35.0).abs() < 1e-12);
        assert!((cvar_lp(&c, &p, 0.5).unwrap() - 35.0).abs() < 1e-9);
    }

    #[test]
    fn mae_examples() {
        let a = vec![vec![1e-6; 12]];
        assert_eq!(mae_by_bus(&a, &a, &[0]).unwrap(), vec![0.0]);
        let b = vec![vec![3e-6; 12]];
        assert!((mae_by_bus(&a, &b, &[0]).unwrap()[0] - 2e-6).abs() < 1e-18);
        assert!(mae_by_bus(&a, &b, &[1]).is_err());
    }

    #[test]
    fn hull_of_unit_square_degree() {
        let pts = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 0.5)];
        let area = hull_area_km2(&pts);
        let expect = KM_PER_DEG * KM_PER_DEG * (0.5f64 * PI / 180.0).cos();
        assert!((area - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn owip_july_example() {
        let recs: Vec<FireRecord> = (0..20)
            .map(|y| FireRecord {
                date: format!("{}-07-15", 2000 + y),
                latitude: 0.0,
                longitude: 0.0,
                acres: 600.0,
            })
            .collect();
        let h = owip_histogram(&recs, 1000.0, 20).unwrap();
        assert!((h[6] - 20.0 / (1000.0 * 31.0 * 20.0)).abs() < 1e-18);
        assert_eq!(h[0], 0.0);
        assert!(matches!(owip_histogram(&recs, 0.0, 20), Err(PspsError::ZeroArea)));
    }
}
