//! Bounded-variable primal simplex on a dense tableau.
//!
//! Each row `i` gets a logical column `r_i = a_i x` carrying the row bounds,
//! so the working system is `[A | -I] (x, r) = 0` and the all-logical basis
//! is always available as a starting point. Infeasible starting values are
//! driven out by a composite phase 1 that minimizes the sum of bound
//! violations of the basic variables.

use crate::error::{MilpError, MilpResult};
use crate::model::{MilpModel, MilpSolution, SolveStatus};
use crate::presolve::{presolve, Presolved, Reduced};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_PIVOT_TOL: f64 = 1e-7;
/// Warm solves taking more pivots than this restart from the slack basis.
const WARM_PIVOT_CAP: usize = 3000;
const REFRESH_EVERY: usize = 100;

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// `min cost^T x` over `lower <= x <= upper`, `lo_i <= terms_i . x <= hi_i`.
#[derive(Clone, Debug)]
pub(crate) struct LpData {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LpData {
    pub fn from_model(model: &MilpModel) -> Self {
        Self {
            lower: model.variables().iter().map(|v| v.lower).collect(),
            upper: model.variables().iter().map(|v| v.upper).collect(),
            cost: model.objective().to_vec(),
            rows: model
                .constraints()
                .iter()
                .map(|c| {
                    let (lo, hi) = c.row_bounds();
                    Row {
                        terms: c.terms.iter().map(|&(v, a)| (v.0, a)).collect(),
                        lo,
                        hi,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub(crate) struct LpOutcome {
    pub status: LpStatus,
    /// Objective excluding any model constant.
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Solves the LP relaxation of `model` (binaries treated as `[0, 1]` continuous).
pub fn solve_lp(model: &MilpModel) -> MilpResult<MilpSolution> {
    model.check_size()?;
    let data = LpData::from_model(model);
    let mut out = solve_lp_data(&data)?;
    model.snap_to_bounds(&mut out.x);
    Ok(match out.status {
        LpStatus::Optimal => MilpSolution {
            status: SolveStatus::Optimal,
            objective: out.objective + model.objective_constant(),
            bound: out.objective + model.objective_constant(),
            values: out.x,
            gap: 0.0,
            nodes: 0,
            lp_iterations: out.iterations,
        },
        LpStatus::Infeasible => {
            MilpSolution::without_point(SolveStatus::Infeasible, 0, out.iterations)
        }
        LpStatus::Unbounded => {
            MilpSolution::without_point(SolveStatus::Unbounded, 0, out.iterations)
        }
    })
}

pub(crate) fn solve_lp_data(lp: &LpData) -> MilpResult<LpOutcome> {
    solve_lp_bounds(lp, &lp.lower, &lp.upper)
}

/// Solves `lp` with its column bounds replaced by `lower`/`upper`.
pub(crate) fn solve_lp_bounds(lp: &LpData, lower: &[f64], upper: &[f64]) -> MilpResult<LpOutcome> {
    let reduced = match presolve(lp, lower, upper) {
        Presolved::Infeasible => {
            return Ok(LpOutcome {
                status: LpStatus::Infeasible,
                objective: f64::INFINITY,
                x: Vec::new(),
                iterations: 0,
            })
        }
        Presolved::Reduced(r) => r,
    };
    let mut simplex = Simplex::new(&reduced.lp);
    let status = simplex.run()?;
    let iterations = simplex.iterations;
    if status != LpStatus::Optimal {
        return Ok(LpOutcome {
            status,
            objective: if status == LpStatus::Infeasible {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            x: Vec::new(),
            iterations,
        });
    }
    let xr = simplex.structural_values();
    let x = reduced.expand(&xr);
    let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome {
        status,
        objective,
        x,
        iterations,
    })
}

/// An LP whose column bounds change between solves. Presolve runs once
/// on the base bounds; later solves only tighten bounds, so the reduced
/// rows stay valid and the simplex restarts from the previous basis.
pub(crate) struct WarmLp {
    reduced: Reduced,
    /// Reduced index of each original column, `usize::MAX` if presolved out.
    index: Vec<usize>,
    simplex: Simplex,
    cost: Vec<f64>,
    /// Binary flag per reduced column.
    binary: Vec<bool>,
    solved_once: bool,
}

impl WarmLp {
    /// `None` when presolve already proves the LP infeasible.
    pub fn new(lp: &LpData, binary: &[bool]) -> Option<Self> {
        let reduced = match presolve(lp, &lp.lower, &lp.upper) {
            Presolved::Infeasible => return None,
            Presolved::Reduced(r) => r,
        };
        let mut index = vec![usize::MAX; lp.lower.len()];
        for (k, &j) in reduced.col_map.iter().enumerate() {
            index[j] = k;
        }
        let simplex = Simplex::new(&reduced.lp);
        let binary = reduced.col_map.iter().map(|&j| binary[j]).collect();
        Some(Self {
            reduced,
            index,
            simplex,
            cost: lp.cost.clone(),
            binary,
            solved_once: false,
        })
    }

    /// Reduced bounds with `fixings` applied; `None` if a fixing is out of range.
    fn node_bounds(&self, fixings: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lower = self.reduced.lp.lower.clone();
        let mut upper = self.reduced.lp.upper.clone();
        for &(j, v) in fixings {
            match self.index[j] {
                usize::MAX => {
                    if (self.reduced.fixed[j].unwrap_or(v) - v).abs() > 1e-9 {
                        return None;
                    }
                }
                k => {
                    if v < lower[k] - 1e-9 || v > upper[k] + 1e-9 {
                        return None;
                    }
                    lower[k] = v;
                    upper[k] = v;
                }
            }
        }
        Some((lower, upper))
    }

    /// Fix-and-propagate rounding: binaries are fixed one at a time, most
    /// integral first, to the nearer value of `x` (the other value if
    /// propagation rejects it). Returns a fixing for every binary column.
    pub fn round_and_propagate(&self, fixings: &[(usize, f64)], x: &[f64]) -> Option<Vec<(usize, f64)>> {
        let (mut lower, mut upper) = self.node_bounds(fixings)?;
        let lp = &self.reduced.lp;
        if !propagate(lp, &self.binary, &mut lower, &mut upper) {
            return None;
        }
        let mut order: Vec<usize> = (0..self.binary.len()).filter(|&k| self.binary[k]).collect();
        let frac = |k: usize| {
            let v = x[self.reduced.col_map[k]];
            (v - v.round()).abs()
        };
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(a.cmp(&b)));
        for &k in &order {
            if upper[k] - lower[k] <= 1e-9 {
                continue;
            }
            let near = x[self.reduced.col_map[k]].round().clamp(0.0, 1.0);
            let mut placed = false;
            for v in [near, 1.0 - near] {
                let (mut l, mut u) = (lower.clone(), upper.clone());
                l[k] = v;
                u[k] = v;
                if propagate(lp, &self.binary, &mut l, &mut u) {
                    lower = l;
                    upper = u;
                    placed = true;
                    break;
                }
            }
            if !placed {
                return None;
            }
        }
        let mut out: Vec<(usize, f64)> = order.iter().map(|&k| (self.reduced.col_map[k], lower[k])).collect();
        out.sort_by_key(|f| f.0);
        Some(out)
    }

    /// Solves with each `(column, value)` in `fixings` fixed.
    pub fn solve(&mut self, fixings: &[(usize, f64)]) -> MilpResult<LpOutcome> {
        let infeasible = LpOutcome {
            status: LpStatus::Infeasible,
            objective: f64::INFINITY,
            x: Vec::new(),
            iterations: 0,
        };
        let Some((mut lower, mut upper)) = self.node_bounds(fixings) else {
            return Ok(infeasible);
        };
        if !propagate(&self.reduced.lp, &self.binary, &mut lower, &mut upper) {
            return Ok(infeasible);
        }
        self.simplex.set_bounds(&lower, &upper);
        let mut iterations = 0;
        let mut warm = if self.solved_once { Some(self.simplex.warm_solve()) } else { None };
        if let Some(Err(_)) = warm {
            iterations += self.simplex.iterations;
            warm = None;
        }
        let status = match warm {
            Some(res) => res?,
            None => {
                self.simplex = Simplex::new(&self.reduced.lp);
                self.simplex.set_bounds(&lower, &upper);
                self.simplex.recompute_basic_values();
                self.simplex.run()?
            }
        };
        self.solved_once = true;
        iterations += self.simplex.iterations;
        if status != LpStatus::Optimal {
            return Ok(LpOutcome {
                status,
                objective: if status == LpStatus::Infeasible {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                x: Vec::new(),
                iterations,
            });
        }
        let x = self.reduced.expand(&self.simplex.structural_values());
        let objective = self.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome {
            status,
            objective,
            x,
            iterations,
        })
    }
}

/// Fixes binaries that a single row already forces to 0 or 1, repeating
/// until nothing changes. Returns false when some row cannot be satisfied.
fn propagate(lp: &LpData, binary: &[bool], lower: &mut [f64], upper: &mut [f64]) -> bool {
    let contrib = |a: f64, l: f64, u: f64| if a > 0.0 { (a * l, a * u) } else { (a * u, a * l) };
    for _pass in 0..20 {
        let mut changed = false;
        for row in &lp.rows {
            // finite parts of the activity range plus counts of infinite ends
            let (mut lo_sum, mut hi_sum, mut lo_inf, mut hi_inf) = (0.0, 0.0, 0usize, 0usize);
            for &(j, a) in &row.terms {
                let (cl, cu) = contrib(a, lower[j], upper[j]);
                if cl.is_finite() { lo_sum += cl } else { lo_inf += 1 }
                if cu.is_finite() { hi_sum += cu } else { hi_inf += 1 }
            }
            let tol_hi = 1e-9 * (1.0 + row.hi.abs());
            let tol_lo = 1e-9 * (1.0 + row.lo.abs());
            if lo_inf == 0 && lo_sum > row.hi + tol_hi {
                return false;
            }
            if hi_inf == 0 && hi_sum < row.lo - tol_lo {
                return false;
            }
            for &(j, a) in &row.terms {
                if !binary[j] || upper[j] - lower[j] <= 1e-9 {
                    continue;
                }
                let (cl, cu) = contrib(a, lower[j], upper[j]);
                // activity range of the rest of the row
                let rest_lo = if lo_inf == 0 { lo_sum - cl } else { f64::NEG_INFINITY };
                let rest_hi = if hi_inf == 0 { hi_sum - cu } else { f64::INFINITY };
                let mut allowed = [0.0, 1.0]
                    .into_iter()
                    .filter(|&v| v >= lower[j] - 1e-9 && v <= upper[j] + 1e-9)
                    .filter(|&v| !(rest_lo + a * v > row.hi + tol_hi || rest_hi + a * v < row.lo - tol_lo));
                let (first, second) = (allowed.next(), allowed.next());
                let v = match (first, second) {
                    (None, _) => return false,
                    (Some(_), Some(_)) => continue,
                    (Some(v), None) => v,
                };
                lower[j] = v;
                upper[j] = v;
                changed = true;
                let (nl, nu) = contrib(a, v, v);
                if lo_inf == 0 {
                    lo_sum += nl - cl;
                }
                if hi_inf == 0 {
                    hi_sum += nu - cu;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

struct Simplex {
    m: usize,
    n: usize,
    /// Tableau width `n + m`.
    w: usize,
    /// Row-major `m x w` tableau `B^{-1} [A_s | -I]`.
    t: Vec<f64>,
    /// Scaled structural columns, for reinversion and residual checks.
    cols: Vec<Vec<(usize, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Row of a basic column, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    d: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum DualEnd {
    Feasible,
    Infeasible,
    GaveUp,
}

enum Entering {
    Column(usize, f64),
    None,
}

enum Step {
    Pivot { row: usize, theta: f64, to_upper: bool },
    Flip { theta: f64 },
    Unbounded,
}

impl Simplex {
    fn new(lp: &LpData) -> Self {
        let m = lp.rows.len();
        let n = lp.lower.len();
        let w = n + m;
        let mut t = vec![0.0; m * w];
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut lb = Vec::with_capacity(w);
        let mut ub = Vec::with_capacity(w);
        lb.extend_from_slice(&lp.lower);
        ub.extend_from_slice(&lp.upper);
        for (i, row) in lp.rows.iter().enumerate() {
            let scale = row
                .terms
                .iter()
                .map(|&(_, a)| a.abs())
                .fold(0.0f64, f64::max);
            let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            for &(j, a) in &row.terms {
                let v = a * s;
                t[i * w + j] -= v;
                cols[j].push((i, v));
            }
            t[i * w + n + i] = 1.0;
            lb.push(row.lo * s);
            ub.push(row.hi * s);
        }
        let cmax = lp.cost.iter().map(|c| c.abs()).fold(0.0f64, f64::max);
        let cs = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
        let mut cost: Vec<f64> = lp.cost.iter().map(|c| c * cs).collect();
        cost.resize(w, 0.0);

        let mut x = vec![0.0; w];
        for j in 0..n {
            x[j] = if lb[j].is_finite() {
                lb[j]
            } else if ub[j].is_finite() {
                ub[j]
            } else {
                0.0
            };
        }
        let basis: Vec<usize> = (n..w).collect();
        let mut pos = vec![usize::MAX; w];
        for (i, &b) in basis.iter().enumerate() {
            pos[b] = i;
        }
        let mut s = Self {
            m,
            n,
            w,
            t,
            cols,
            lb,
            ub,
            cost,
            x,
            basis,
            pos,
            d: vec![0.0; w],
            iterations: 0,
            max_iterations: 50 * (m + w) + 10_000,
        };
        s.recompute_basic_values();
        s
    }

    fn set_bounds(&mut self, lower: &[f64], upper: &[f64]) {
        self.lb[..self.n].copy_from_slice(lower);
        self.ub[..self.n].copy_from_slice(upper);
        for j in 0..self.n {
            if self.pos[j] == usize::MAX {
                self.x[j] = self.x[j].max(self.lb[j]).min(self.ub[j]);
            }
        }
    }

    /// Re-solves after a bound change starting from the current basis:
    /// nonbasic columns move to the bound their reduced cost prefers, a
    /// dual simplex restores primal feasibility, and the primal loop
    /// confirms optimality.
    fn warm_solve(&mut self) -> MilpResult<LpStatus> {
        self.iterations = 0;
        self.phase2_costs();
        let mut dual_feasible = true;
        for j in 0..self.w {
            if self.pos[j] != usize::MAX {
                continue;
            }
            let (l, u) = (self.lb[j], self.ub[j]);
            let dj = self.d[j];
            let target = if dj > DUAL_TOL {
                l
            } else if dj < -DUAL_TOL {
                u
            } else {
                self.x[j].max(l).min(u)
            };
            if target.is_finite() {
                self.x[j] = target;
            } else {
                dual_feasible = false;
                self.x[j] = if l.is_finite() {
                    l
                } else if u.is_finite() {
                    u
                } else {
                    0.0
                };
            }
        }
        self.recompute_basic_values();
        if dual_feasible {
            match self.dual_iterate()? {
                DualEnd::Infeasible => return Ok(LpStatus::Infeasible),
                DualEnd::Feasible => {}
                DualEnd::GaveUp => return Err(MilpError::NumericalFailure("dual simplex stalled".into())),
            }
        }
        let cap = self.max_iterations;
        self.max_iterations = self.iterations + WARM_PIVOT_CAP;
        let res = self.run();
        self.max_iterations = cap;
        res
    }

    /// Dual simplex on a dual-feasible basis.
    fn dual_iterate(&mut self) -> MilpResult<DualEnd> {
        // perturb nonbasic reduced costs away from zero to break dual
        // degeneracy; the primal pass afterwards uses the true costs
        for j in 0..self.w {
            if self.pos[j] != usize::MAX || self.ub[j] - self.lb[j] <= 0.0 {
                continue;
            }
            let eps = 1e-7 * (1.0 + ((j as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0);
            if self.x[j] <= self.lb[j] {
                self.d[j] = self.d[j].max(0.0) + eps;
            } else if self.x[j] >= self.ub[j] {
                self.d[j] = self.d[j].min(0.0) - eps;
            }
        }
        for _ in 0..WARM_PIVOT_CAP {
            let mut leave = None;
            let mut worst = PRIMAL_TOL;
            for i in 0..self.m {
                let b = self.basis[i];
                let v = self.x[b];
                let viol = if v < self.lb[b] - PRIMAL_TOL {
                    self.lb[b] - v
                } else if v > self.ub[b] + PRIMAL_TOL {
                    v - self.ub[b]
                } else {
                    0.0
                };
                if viol > worst {
                    worst = viol;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                return Ok(DualEnd::Feasible);
            };
            let b = self.basis[r];
            let increase = self.x[b] < self.lb[b];
            let bound = if increase { self.lb[b] } else { self.ub[b] };
            let row = &self.t[r * self.w..(r + 1) * self.w];
            // Harris two-pass: bound the step with slightly relaxed dual
            // feasibility, then take the largest pivot within it
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            let mut theta_max = f64::INFINITY;
            for j in 0..self.w {
                if self.pos[j] != usize::MAX || self.ub[j] - self.lb[j] <= 0.0 {
                    continue;
                }
                let a = row[j];
                if a.abs() <= DUAL_PIVOT_TOL {
                    continue;
                }
                // x_b moves by -a * delta_j
                let up = if increase { a < 0.0 } else { a > 0.0 };
                let movable = if up { self.x[j] < self.ub[j] } else { self.x[j] > self.lb[j] };
                if !movable {
                    continue;
                }
                let dj = self.d[j].abs();
                theta_max = theta_max.min((dj + DUAL_TOL) / a.abs());
                cands.push((j, dj / a.abs(), a.abs()));
            }
            let best = cands
                .iter()
                .filter(|c| c.1 <= theta_max)
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
                .copied();
            let Some((q, _, _)) = best else {
                return Ok(DualEnd::Infeasible);
            };
            self.iterations += 1;
            let delta = (self.x[b] - bound) / self.t[r * self.w + q];
            self.move_along(q, 1.0, delta);
            self.x[b] = bound;
            self.pivot(r, q, true);
        }
        Ok(DualEnd::GaveUp)
    }

    fn structural_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.w + j]
    }

    /// `x_B = -sum_{j nonbasic} T_j x_j`.
    fn recompute_basic_values(&mut self) {
        let mut xb = vec![0.0; self.m];
        for j in 0..self.w {
            if self.pos[j] != usize::MAX || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            for (i, v) in xb.iter_mut().enumerate() {
                let a = self.t[i * self.w + j];
                if a != 0.0 {
                    *v -= a * xj;
                }
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            self.x[b] = xb[i];
        }
    }

    fn infeasibility(&self, i: usize) -> f64 {
        let b = self.basis[i];
        let v = self.x[b];
        if v < self.lb[b] - PRIMAL_TOL {
            -1.0
        } else if v > self.ub[b] + PRIMAL_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn phase1_costs(&mut self) -> bool {
        let infeasible: Vec<(usize, f64)> = (0..self.m)
            .map(|i| (i, self.infeasibility(i)))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        if infeasible.is_empty() {
            return false;
        }
        self.d.iter_mut().for_each(|v| *v = 0.0);
        for (i, c) in infeasible {
            let row = &self.t[i * self.w..(i + 1) * self.w];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                if a != 0.0 {
                    *dj -= c * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
        true
    }

    fn phase2_costs(&mut self) {
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.w..(i + 1) * self.w];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                if a != 0.0 {
                    *dj -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn choose_entering(&self, bland: bool) -> Entering {
        let mut best = Entering::None;
        let mut best_score = 0.0;
        for j in 0..self.w {
            if self.pos[j] != usize::MAX {
                continue;
            }
            let (l, u) = (self.lb[j], self.ub[j]);
            if u - l <= 0.0 {
                continue;
            }
            let dj = self.d[j];
            let xj = self.x[j];
            let dir = if dj < -DUAL_TOL && xj < u {
                1.0
            } else if dj > DUAL_TOL && xj > l {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Entering::Column(j, dir);
            }
            let score = dj.abs();
            if score > best_score {
                best_score = score;
                best = Entering::Column(j, dir);
            }
        }
        best
    }

    /// Harris two-pass ratio test (plain minimum ratio with lowest-index
    /// ties under Bland's rule). `phase1` lets infeasible basics pass their
    /// violated bound as a breakpoint.
    fn ratio_test(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> Step {
        let range = self.ub[q] - self.lb[q];
        // (row, exact ratio, harris ratio, |alpha|, leaves at upper)
        let mut cands: Vec<(usize, f64, f64, f64, bool)> = Vec::new();
        for i in 0..self.m {
            let alpha = dir * self.at(i, q);
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let v = self.x[b];
            let (l, u) = (self.lb[b], self.ub[b]);
            let below = v < l - PRIMAL_TOL;
            let above = v > u + PRIMAL_TOL;
            if alpha > 0.0 {
                // basic value decreases
                if phase1 && above {
                    let r = (v - u) / alpha;
                    cands.push((i, r, (v - u + PRIMAL_TOL) / alpha, alpha, true));
                } else if !below && l.is_finite() {
                    let r = ((v - l) / alpha).max(0.0);
                    cands.push((i, r, (v - l + PRIMAL_TOL) / alpha, alpha, false));
                }
            } else {
                let a = -alpha;
                if phase1 && below {
                    let r = (l - v) / a;
                    cands.push((i, r, (l - v + PRIMAL_TOL) / a, a, false));
                } else if !above && u.is_finite() {
                    let r = ((u - v) / a).max(0.0);
                    cands.push((i, r, (u - v + PRIMAL_TOL) / a, a, true));
                }
            }
        }
        if cands.is_empty() {
            return if range.is_finite() {
                Step::Flip { theta: range }
            } else {
                Step::Unbounded
            };
        }
        let chosen = if bland {
            let min_r = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            if range.is_finite() && range <= min_r {
                return Step::Flip { theta: range };
            }
            cands
                .iter()
                .filter(|c| c.1 <= min_r + 1e-12)
                .min_by_key(|c| self.basis[c.0])
                .copied()
                .unwrap()
        } else {
            let theta_max = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
            if range.is_finite() && range <= theta_max {
                return Step::Flip { theta: range };
            }
            cands
                .iter()
                .filter(|c| c.1 <= theta_max)
                .max_by(|a, b| a.3.total_cmp(&b.3).then(b.0.cmp(&a.0)))
                .copied()
                .unwrap_or_else(|| {
                    *cands
                        .iter()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap()
                })
        };
        Step::Pivot {
            row: chosen.0,
            theta: chosen.1,
            to_upper: chosen.4,
        }
    }

    fn move_along(&mut self, q: usize, dir: f64, theta: f64) {
        if theta == 0.0 {
            return;
        }
        for i in 0..self.m {
            let a = self.t[i * self.w + q];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= theta * dir * a;
            }
        }
        self.x[q] += theta * dir;
    }

    fn pivot(&mut self, r: usize, q: usize, update_d: bool) {
        let w = self.w;
        let piv = self.t[r * w + q];
        let inv = 1.0 / piv;
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                if *v != 0.0 {
                    *v *= inv;
                }
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        let nz: Vec<usize> = pivot_row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        let sparse = nz.len() * 3 < w;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            if sparse {
                for &j in &nz {
                    row[j] -= f * pivot_row[j];
                }
            } else {
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
            row[q] = 0.0;
        }
        if update_d {
            let f = self.d[q];
            if f != 0.0 {
                for &j in &nz {
                    self.d[j] -= f * pivot_row[j];
                }
            }
            self.d[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.pos[leaving] = usize::MAX;
        self.basis[r] = q;
        self.pos[q] = r;
    }

    /// Rebuilds the tableau from the current basis by Gauss-Jordan elimination
    /// on `B`. Returns false when the basis is numerically singular.
    fn reinvert(&mut self) -> bool {
        let m = self.m;
        let n = self.n;
        // B column k = column basis[k] of [A_s | -I]
        let mut bmat = vec![0.0; m * m];
        for (k, &b) in self.basis.iter().enumerate() {
            if b < n {
                for &(i, v) in &self.cols[b] {
                    bmat[i * m + k] = v;
                }
            } else {
                bmat[(b - n) * m + k] = -1.0;
            }
        }
        // invert via Gauss-Jordan with partial pivoting
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, pv) = (c..m)
                .map(|i| (i, bmat[i * m + c].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if pv < 1e-12 {
                return false;
            }
            if p != c {
                for k in 0..m {
                    bmat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = 1.0 / bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = bmat[i * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    bmat[i * m + k] -= f * bmat[c * m + k];
                    inv[i * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // T = B^{-1} [A_s | -I]; row k of T corresponds to basis position k
        let w = self.w;
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            for &(i, v) in &self.cols[j] {
                for k in 0..m {
                    let a = inv[k * m + i];
                    if a != 0.0 {
                        self.t[k * w + j] += a * v;
                    }
                }
            }
        }
        for i in 0..m {
            for k in 0..m {
                self.t[k * w + n + i] = -inv[k * m + i];
            }
        }
        for (k, &b) in self.basis.iter().enumerate() {
            for kk in 0..m {
                self.t[kk * w + b] = if kk == k { 1.0 } else { 0.0 };
            }
        }
        true
    }

    fn equality_residual(&self) -> f64 {
        let mut act = vec![0.0; self.m];
        for j in 0..self.n {
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            for &(i, v) in &self.cols[j] {
                act[i] += v * xj;
            }
        }
        (0..self.m)
            .map(|i| (act[i] - self.x[self.n + i]).abs())
            .fold(0.0, f64::max)
    }

    fn run(&mut self) -> MilpResult<LpStatus> {
        let mut reinversions = 0;
        for _round in 0..8 {
            let status = self.iterate()?;
            if status != LpStatus::Optimal {
                return Ok(status);
            }
            self.recompute_basic_values();
            if self.equality_residual() > 1e-9 {
                reinversions += 1;
                if reinversions > 3 || !self.reinvert() {
                    return Err(MilpError::NumericalFailure(format!(
                        "equality residual {:.3e} after {} reinversions",
                        self.equality_residual(),
                        reinversions
                    )));
                }
                self.recompute_basic_values();
                continue;
            }
            if (0..self.m).all(|i| self.infeasibility(i) == 0.0) {
                return Ok(status);
            }
        }
        Err(MilpError::NumericalFailure(
            "could not restore primal feasibility".into(),
        ))
    }

    fn iterate(&mut self) -> MilpResult<LpStatus> {
        let degenerate_limit = 5 * (self.m + self.w);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut phase2_fresh = false;
        let mut since_refresh = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(MilpError::NumericalFailure(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            since_refresh += 1;
            if since_refresh >= REFRESH_EVERY {
                since_refresh = 0;
                self.recompute_basic_values();
                phase2_fresh = false;
            }
            let phase1 = self.phase1_costs();
            let mut computed_now = phase1;
            if phase1 {
                phase2_fresh = false;
            } else if !phase2_fresh {
                self.phase2_costs();
                phase2_fresh = true;
                computed_now = true;
            }
            let (q, dir) = match self.choose_entering(bland) {
                Entering::Column(q, dir) => (q, dir),
                Entering::None if !computed_now => {
                    // confirm optimality on freshly computed reduced costs
                    phase2_fresh = false;
                    continue;
                }
                Entering::None => {
                    return Ok(if phase1 {
                        LpStatus::Infeasible
                    } else {
                        LpStatus::Optimal
                    });
                }
            };
            match self.ratio_test(q, dir, phase1, bland) {
                Step::Unbounded => {
                    if phase1 {
                        return Err(MilpError::NumericalFailure(
                            "phase 1 direction without breakpoint".into(),
                        ));
                    }
                    return Ok(LpStatus::Unbounded);
                }
                Step::Flip { theta } => {
                    self.move_along(q, dir, theta);
                    self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                    degenerate_run = 0;
                    bland = false;
                }
                Step::Pivot { row, theta, to_upper } => {
                    let leaving = self.basis[row];
                    self.move_along(q, dir, theta);
                    self.x[leaving] = if to_upper {
                        self.ub[leaving]
                    } else {
                        self.lb[leaving]
                    };
                    self.pivot(row, q, !phase1 && phase2_fresh);
                    if theta <= 1e-12 {
                        degenerate_run += 1;
                        if degenerate_run >= degenerate_limit {
                            bland = true;
                        }
                    } else {
                        degenerate_run = 0;
                        bland = false;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MilpModel, Sense};

    fn lp(model: &MilpModel) -> MilpSolution {
        solve_lp(model).unwrap()
    }

    #[test]
    fn single_variable_lower_bound_row() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_constraint("lo", &[(x, 1.0)], Sense::Ge, 3.0).unwrap();
        m.add_constraint("hi", &[(x, 1.0)], Sense::Le, 10.0).unwrap();
        m.set_objective_coef(x, 1.0);
        let s = lp(&m);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.value(x) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn vertex_of_simplex() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_constraint("sum", &[(x, 1.0), (y, 1.0)], Sense::Le, 1.0)
            .unwrap();
        m.set_objective_coef(x, -1.0);
        m.set_objective_coef(y, -1.0);
        let s = lp(&m);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", 0.0, f64::INFINITY).unwrap();
        m.add_constraint("a", &[(x, 1.0), (y, 1.0)], Sense::Le, 1.0)
            .unwrap();
        m.add_constraint("b", &[(x, 1.0), (y, 2.0)], Sense::Ge, 3.0)
            .unwrap();
        assert_eq!(lp(&m).status, SolveStatus::Infeasible);

        let mut u = MilpModel::new();
        let x = u.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        let y = u.add_continuous("y", 0.0, f64::INFINITY).unwrap();
        u.add_constraint("a", &[(x, 1.0), (y, -1.0)], Sense::Le, 1.0)
            .unwrap();
        u.set_objective_coef(x, -1.0);
        assert_eq!(lp(&u).status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x + 2y  s.t. x - y = 1, x + y >= 3, y free
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_constraint("e", &[(x, 1.0), (y, -1.0)], Sense::Eq, 1.0)
            .unwrap();
        m.add_constraint("g", &[(x, 1.0), (y, 1.0)], Sense::Ge, 3.0)
            .unwrap();
        m.set_objective_coef(x, 1.0);
        m.set_objective_coef(y, 2.0);
        let s = lp(&m);
        assert_eq!(s.status, SolveStatus::Optimal);
        // x = 2, y = 1
        assert!((s.objective - 4.0).abs() < 1e-9, "{}", s.objective);
    }
}
