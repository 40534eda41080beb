//! Shared fixtures for the integration tests: random small networks, a
//! brute-force reference for the day-ahead problem, and direct legality
//! scans of solved plans.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use psps_core::formulation::{CommitmentPlan, CvarConfig, DamagedTerm, ScenarioDispatch};
use psps_core::grid::{Bus, Demand, Generator, Line, PowerNetwork};
use psps_core::scenario::{Scenario, ScenarioKind, ScenarioSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const THETA_BOUND: f64 = 0.6;

pub struct Instance {
    pub net: PowerNetwork,
    pub scenarios: ScenarioSet,
    /// Log-probability tolerance, if any.
    pub pi_tol: Option<f64>,
}

/// Upper bound on the number of first-stage patterns the reference enumerates.
pub fn pattern_count(gens: usize, lines: usize, h: usize) -> usize {
    (1usize << (gens * h)) * (h + 1).pow(lines as u32)
}

/// A random network with at most 4 buses, 5 lines and 3 generators and a
/// horizon of at most 4 steps, whose raw pattern count stays under `cap`.
pub fn random_instance(rng: &mut ChaCha8Rng, n_scen: usize, cap: usize) -> Instance {
    let (nb, nl, ng, h) = loop {
        let nb = rng.gen_range(2..=4);
        let nl = rng.gen_range(nb - 1..=5);
        let ng = rng.gen_range(1..=3);
        let h = rng.gen_range(1..=4);
        if pattern_count(ng, nl, h) <= cap {
            break (nb, nl, ng, h);
        }
    };
    let buses: Vec<Bus> = (1..=nb)
        .map(|id| Bus {
            id,
            name: format!("b{id}"),
            latitude: 38.0 + 0.1 * id as f64,
            longitude: -121.0,
        })
        .collect();
    let mut lines = Vec::with_capacity(nl);
    for l in 0..nl {
        // spanning chain first, then random extra (possibly parallel) lines
        let (a, b) = if l + 1 < nb {
            (l + 1, l + 2)
        } else {
            let a = rng.gen_range(1..=nb);
            let mut b = rng.gen_range(1..=nb);
            while b == a {
                b = rng.gen_range(1..=nb);
            }
            (a, b)
        };
        let cap = rng.gen_range(20.0..120.0);
        lines.push(Line {
            id: l + 1,
            from_bus: a,
            to_bus: b,
            susceptance: rng.gen_range(50.0..400.0),
            flow_min: -cap,
            flow_max: cap,
            endpoints: [(38.0 + 0.1 * a as f64, -121.0), (38.0 + 0.1 * b as f64, -121.0)],
        });
    }
    let generators: Vec<Generator> = (1..=ng)
        .map(|id| {
            let p_max = rng.gen_range(30.0..150.0);
            let ramp = p_max * rng.gen_range(0.3..1.2);
            Generator {
                id,
                bus: rng.gen_range(1..=nb),
                p_min: p_max * rng.gen_range(0.0..0.4),
                p_max,
                ramp_down: -ramp,
                ramp_up: ramp,
                min_up: rng.gen_range(1..=3),
                min_down: rng.gen_range(1..=3),
                marginal_cost: rng.gen_range(5.0..60.0),
                startup_cost: rng.gen_range(0.0..800.0),
                shutdown_cost: rng.gen_range(0.0..200.0),
                initially_on: rng.gen_bool(0.5),
            }
        })
        .collect();
    let demand_buses: Vec<usize> = (1..=nb).filter(|_| rng.gen_bool(0.7)).collect();
    let demand_buses = if demand_buses.is_empty() { vec![nb] } else { demand_buses };
    let demands: Vec<Demand> = demand_buses
        .iter()
        .enumerate()
        .map(|(k, &bus)| Demand {
            id: k + 1,
            bus,
            voll: rng.gen_range(200.0..1000.0),
            base_profile: (0..h).map(|_| rng.gen_range(10.0..90.0)).collect(),
        })
        .collect();
    let net = PowerNetwork {
        buses,
        lines,
        generators,
        demands,
        horizon: h,
        step_hours: [1.0, 6.0][rng.gen_range(0..2)],
    };

    let zero: Vec<bool> = (0..nl).map(|_| rng.gen_bool(0.25)).collect();
    let mut weights: Vec<f64> = (0..n_scen).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let head: f64 = weights[..n_scen - 1].iter().sum();
    weights[n_scen - 1] = 1.0 - head;
    let scenarios = ScenarioSet {
        kind: ScenarioKind::DayAhead,
        scenarios: (0..n_scen)
            .map(|s| Scenario {
                id: s + 1,
                probability: weights[s],
                demand: net
                    .demands
                    .iter()
                    .map(|d| d.base_profile.iter().map(|v| v * rng.gen_range(0.6..1.4)).collect())
                    .collect(),
                line_risk: zero
                    .iter()
                    .map(|&z| if z { 0.0 } else { rng.gen_range(0.01..0.45) })
                    .collect(),
                line_metric: Vec::new(),
            })
            .collect(),
    };
    let pi_tol = if rng.gen_bool(0.75) {
        // somewhere between "everything risky dark" and "everything on"
        let pi = mean_risk(&scenarios);
        let lo: f64 = pi.iter().filter(|&&p| p > 0.0).map(|p| p.ln()).sum();
        let hi: f64 = pi
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p.ln().max((1.0 - p).ln()))
            .sum();
        Some((lo + rng.gen_range(0.05..1.0) * (hi - lo)).exp().min(1.0))
    } else {
        None
    };
    Instance { net, scenarios, pi_tol }
}

pub fn mean_risk(scenarios: &ScenarioSet) -> Vec<f64> {
    let n = scenarios.scenarios[0].line_risk.len();
    (0..n)
        .map(|l| scenarios.scenarios.iter().map(|s| s.probability * s.line_risk[l]).sum())
        .collect()
}

/// Every on/off sequence of one generator that respects its minimum run
/// lengths, counted from its initial state.
fn legal_gen_sequences(g: &Generator, h: usize) -> Vec<Vec<bool>> {
    (0..1usize << h)
        .map(|mask| (0..h).map(|t| mask >> t & 1 == 1).collect::<Vec<bool>>())
        .filter(|on| runs_ok(g, on))
        .collect()
}

/// Runs that begin inside the horizon last at least the minimum length or
/// reach the end of the day.
pub fn runs_ok(g: &Generator, on: &[bool]) -> bool {
    let h = on.len();
    let mut prev = g.initially_on;
    for t in 0..h {
        if on[t] != prev {
            let need = if on[t] { g.min_up } else { g.min_down };
            let end = (t + need).min(h);
            if on[t..end].iter().any(|&v| v != on[t]) {
                return false;
            }
        }
        prev = on[t];
    }
    true
}

/// Product-form damage probability test at every step.
fn budget_ok(pi: &[f64], line_on: &[Vec<bool>], pi_tol: f64) -> bool {
    let h = line_on.first().map_or(0, |r| r.len());
    (0..h).all(|t| {
        let prob: f64 = pi
            .iter()
            .zip(line_on)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, on)| if on[t] { 1.0 - p } else { p })
            .product();
        prob <= pi_tol
    })
}

pub struct Reference {
    pub objective: f64,
    pub gen_on: Vec<Vec<bool>>,
    pub line_on: Vec<Vec<bool>>,
    pub patterns: usize,
}

/// Minimum over all legal first-stage patterns of the second-stage LP,
/// solved by an independent LP code. `None` when nothing is feasible.
pub fn brute_force(inst: &Instance, cvar: Option<CvarConfig>) -> Option<Reference> {
    let net = &inst.net;
    let h = net.horizon;
    let gen_choices: Vec<Vec<Vec<bool>>> = net.generators.iter().map(|g| legal_gen_sequences(g, h)).collect();
    let line_seq: Vec<Vec<bool>> = (0..=h).map(|off| (0..h).map(|t| t < off).collect()).collect();
    let pi = mean_risk(&inst.scenarios);

    let mut best: Option<Reference> = None;
    let mut patterns = 0;
    let mut gi = vec![0usize; gen_choices.len()];
    loop {
        let gen_on: Vec<Vec<bool>> = gi.iter().zip(&gen_choices).map(|(&i, c)| c[i].clone()).collect();
        let mut li = vec![0usize; net.lines.len()];
        loop {
            let line_on: Vec<Vec<bool>> = li.iter().map(|&i| line_seq[i].clone()).collect();
            if inst.pi_tol.is_none_or(|tol| budget_ok(&pi, &line_on, tol)) {
                patterns += 1;
                if let Some(obj) = pattern_value(inst, &gen_on, &line_on, cvar) {
                    if best.as_ref().is_none_or(|b| obj < b.objective) {
                        best = Some(Reference {
                            objective: obj,
                            gen_on: gen_on.clone(),
                            line_on,
                            patterns: 0,
                        });
                    }
                }
            }
            if !odometer(&mut li, |_| h + 1) {
                break;
            }
        }
        if !odometer(&mut gi, |k| gen_choices[k].len()) {
            break;
        }
    }
    best.map(|b| Reference { patterns, ..b })
}

fn odometer(idx: &mut [usize], size: impl Fn(usize) -> usize) -> bool {
    for k in 0..idx.len() {
        idx[k] += 1;
        if idx[k] < size(k) {
            return true;
        }
        idx[k] = 0;
    }
    false
}

fn commitment_cost(net: &PowerNetwork, gen_on: &[Vec<bool>]) -> f64 {
    let mut c = 0.0;
    for (g, on) in net.generators.iter().zip(gen_on) {
        let mut prev = g.initially_on;
        for &z in on {
            if z && !prev {
                c += g.startup_cost;
            }
            if !z && prev {
                c += g.shutdown_cost;
            }
            prev = z;
        }
    }
    c
}

/// Optimal recourse value of one first-stage pattern: the expected cost, or
/// `(1 - beta) mean + beta CVaR` over the scenario costs.
pub fn pattern_value(inst: &Instance, gen_on: &[Vec<bool>], line_on: &[Vec<bool>], cvar: Option<CvarConfig>) -> Option<f64> {
    let net = &inst.net;
    let h = net.horizon;
    let dt = net.step_hours;
    let beta = cvar.map_or(0.0, |c| c.beta);
    let uc = commitment_cost(net, gen_on);
    let reference = net.generators.iter().map(|g| g.bus).min().unwrap_or(1) - 1;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut constant = (1.0 - beta) * uc;
    let nu = (beta > 0.0).then(|| lp.add_var(beta, (f64::NEG_INFINITY, f64::INFINITY)));

    for s in &inst.scenarios.scenarios {
        let w = (1.0 - beta) * s.probability;
        // scenario cost = sum of (coef, var) + scen_const
        let mut terms = Vec::new();
        let mut scen_const = 0.0;
        let mut p = Vec::new();
        for (g, gen) in net.generators.iter().enumerate() {
            let row: Vec<_> = (0..h)
                .map(|t| {
                    let (lo, hi) = if gen_on[g][t] { (gen.p_min, gen.p_max) } else { (0.0, 0.0) };
                    let c = gen.marginal_cost * dt;
                    let v = lp.add_var(w * c, (lo, hi));
                    terms.push((v, c));
                    v
                })
                .collect();
            for t in 1..h {
                let shift = gen.p_max * (gen_on[g][t] as u8 as f64 - gen_on[g][t - 1] as u8 as f64);
                let e = [(row[t], 1.0), (row[t - 1], -1.0)];
                lp.add_constraint(e, ComparisonOp::Le, gen.ramp_up + shift);
                lp.add_constraint(e, ComparisonOp::Ge, gen.ramp_down + shift);
            }
            p.push(row);
        }
        let theta: Vec<Vec<_>> = (0..net.buses.len())
            .map(|b| {
                let bound = if b == reference { 0.0 } else { THETA_BOUND };
                (0..h).map(|_| lp.add_var(0.0, (-bound, bound))).collect()
            })
            .collect();
        let mut injections: Vec<Vec<Vec<(minilp::Variable, f64)>>> = vec![vec![Vec::new(); h]; net.buses.len()];
        for (g, gen) in net.generators.iter().enumerate() {
            for t in 0..h {
                injections[gen.bus - 1][t].push((p[g][t], 1.0));
            }
        }
        for (l, line) in net.lines.iter().enumerate() {
            for t in 0..h {
                if !line_on[l][t] {
                    continue;
                }
                let f = lp.add_var(0.0, (line.flow_min, line.flow_max));
                let (i, j) = (line.from_bus - 1, line.to_bus - 1);
                lp.add_constraint(
                    [(f, 1.0), (theta[i][t], -line.susceptance), (theta[j][t], line.susceptance)],
                    ComparisonOp::Eq,
                    0.0,
                );
                injections[i][t].push((f, -1.0));
                injections[j][t].push((f, 1.0));
            }
        }
        for (k, dem) in net.demands.iter().enumerate() {
            for t in 0..h {
                let load = s.demand[k][t];
                let c = dem.voll * load * dt;
                let x = lp.add_var(-w * c, (0.0, 1.0));
                constant += w * c;
                scen_const += c;
                terms.push((x, -c));
                injections[dem.bus - 1][t].push((x, -load));
            }
        }
        for row in injections {
            for e in row {
                if !e.is_empty() {
                    lp.add_constraint(e, ComparisonOp::Eq, 0.0);
                }
            }
        }
        if let (Some(nu), Some(c)) = (nu, cvar) {
            // gamma >= uc + cost - nu
            let gamma = lp.add_var(beta * s.probability / (1.0 - c.epsilon), (0.0, f64::INFINITY));
            let mut e = vec![(gamma, 1.0), (nu, 1.0)];
            e.extend(terms.iter().map(|&(v, a)| (v, -a)));
            lp.add_constraint(e, ComparisonOp::Ge, uc + scen_const);
        }
    }
    lp.solve().ok().map(|sol| sol.objective() + constant)
}

/// Direct checks of a solved plan and dispatch; returns the first problem found.
pub fn legality(net: &PowerNetwork, plan: &CommitmentPlan, d: &ScenarioDispatch, demand: &[Vec<f64>]) -> Result<(), String> {
    let h = net.horizon;
    const TOL: f64 = 1e-6;
    for (g, gen) in net.generators.iter().enumerate() {
        let on = &plan.gen_on[g];
        if !runs_ok(gen, on) {
            return Err(format!("generator {} breaks its minimum up/down time: {on:?}", gen.id));
        }
        let mut prev = gen.initially_on;
        for t in 0..h {
            if plan.gen_up[g][t] != (on[t] && !prev) || plan.gen_dn[g][t] != (!on[t] && prev) {
                return Err(format!("generator {} start/stop flags at step {t}", gen.id));
            }
            prev = on[t];
            let pv = d.p[g][t];
            let (lo, hi) = if on[t] { (gen.p_min, gen.p_max) } else { (0.0, 0.0) };
            if pv < lo - TOL || pv > hi + TOL {
                return Err(format!("generator {} output {pv} outside [{lo}, {hi}] at step {t}", gen.id));
            }
            let aux = pv - gen.p_max * on[t] as u8 as f64;
            if (d.p_aux[g][t] - aux).abs() > TOL {
                return Err(format!("generator {} p_aux mismatch at step {t}", gen.id));
            }
            if t > 0 {
                let step = d.p_aux[g][t] - d.p_aux[g][t - 1];
                if step > gen.ramp_up + TOL || step < gen.ramp_down - TOL {
                    return Err(format!("generator {} ramps {step} at step {t}", gen.id));
                }
            }
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        for t in 0..h {
            if t + 1 < h && !plan.line_on[l][t] && plan.line_on[l][t + 1] {
                return Err(format!("line {} re-energized at step {}", line.id, t + 1));
            }
            let f = d.flow[l][t];
            if !plan.line_on[l][t] && f.abs() > TOL {
                return Err(format!("dark line {} carries {f} at step {t}", line.id));
            }
            if f < line.flow_min - TOL || f > line.flow_max + TOL {
                return Err(format!("line {} flow {f} beyond its rating at step {t}", line.id));
            }
        }
    }
    for b in 0..net.buses.len() {
        for t in 0..h {
            let mut r = 0.0;
            for (g, gen) in net.generators.iter().enumerate() {
                if gen.bus == b + 1 {
                    r += d.p[g][t];
                }
            }
            for (l, line) in net.lines.iter().enumerate() {
                if line.from_bus == b + 1 {
                    r -= d.flow[l][t];
                }
                if line.to_bus == b + 1 {
                    r += d.flow[l][t];
                }
            }
            for (k, dem) in net.demands.iter().enumerate() {
                if dem.bus == b + 1 {
                    r -= d.served[k][t] * demand[k][t];
                }
            }
            if r.abs() > TOL {
                return Err(format!("bus {} balance residual {r} MW at step {t}", b + 1));
            }
        }
    }
    Ok(())
}

pub fn log_budget(pi_tol: f64) -> psps_core::formulation::RiskBudget {
    psps_core::formulation::RiskBudget::LogWip {
        pi_tol,
        damaged_term: DamagedTerm::Cumulative,
    }
}
