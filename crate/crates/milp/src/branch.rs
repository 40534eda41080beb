//! Best-bound branch-and-bound over the binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::error::MilpResult;
use crate::lp::{LpData, LpOutcome, LpStatus, WarmLp};
use crate::model::{Limits, MilpModel, MilpSolution, SolveStatus, VarKind};
use crate::{DEFAULT_REL_GAP, INTEGRALITY_TOL};

/// Rounding heuristic runs at every node whose depth is one less than a
/// multiple of this.
const HEURISTIC_DEPTH_STRIDE: usize = 8;

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixings: Vec<(usize, f64)>,
    branch_var: usize,
    /// Relaxation value of `branch_var`, used to pick the diving side.
    branch_value: f64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the maximum: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    lp: WarmLp,
    binaries: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
    iterations: usize,
}

impl<'a> Search<'a> {
    fn solve_with(&mut self, fixings: &[(usize, f64)]) -> MilpResult<LpOutcome> {
        let out = self.lp.solve(fixings)?;
        self.nodes += 1;
        self.iterations += out.iterations;
        Ok(out)
    }

    fn objective(&self, out: &LpOutcome) -> f64 {
        out.objective + self.model.objective_constant()
    }

    /// Most fractional binary; ties go to the lowest index.
    fn branching_variable(&self, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_frac = INTEGRALITY_TOL;
        for &j in &self.binaries {
            let frac = (x[j] - x[j].round()).abs();
            if frac > best_frac {
                best_frac = frac;
                best = Some(j);
            }
        }
        best
    }

    fn prune_threshold(&self, limits: &Limits) -> f64 {
        match &self.incumbent {
            None => f64::INFINITY,
            Some((obj, _)) => {
                let tol = limits.abs_gap.max(limits.rel_gap * obj.abs().max(1.0));
                obj - tol
            }
        }
    }

    /// Fix-and-propagate rounding of `x` below the node given by `fixings`.
    fn round_heuristic(&mut self, fixings: &[(usize, f64)], x: &[f64]) -> MilpResult<()> {
        let Some(all) = self.lp.round_and_propagate(fixings, x) else {
            return Ok(());
        };
        let out = self.solve_with(&all)?;
        if out.status == LpStatus::Optimal {
            self.offer(&out);
        }
        Ok(())
    }

    fn offer(&mut self, out: &LpOutcome) {
        let obj = self.objective(out);
        let better = match &self.incumbent {
            None => true,
            Some((best, _)) => obj < *best - 1e-12 * best.abs().max(1.0),
        };
        if better {
            self.incumbent = Some((obj, out.x.clone()));
        }
    }

    /// Re-solves with every binary fixed at its rounded value so the
    /// reported point is exactly integral, and records it if it improves.
    fn try_incumbent(&mut self, x: &[f64]) -> MilpResult<()> {
        let fixings: Vec<(usize, f64)> = self.binaries.iter().map(|&j| (j, x[j].round())).collect();
        let out = self.solve_with(&fixings)?;
        if out.status == LpStatus::Optimal {
            self.offer(&out);
        }
        Ok(())
    }
}

/// Solves `model` by branch-and-bound on LP relaxations: depth-first
/// diving until a first incumbent exists, best-bound afterwards.
///
/// The result is deterministic for a given model and limits, except when a
/// time limit interrupts the search.
pub fn solve_milp(model: &MilpModel, limits: &Limits) -> MilpResult<MilpSolution> {
    model.check_size()?;
    let start = Instant::now();
    let binaries: Vec<usize> = model
        .variables()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let is_binary: Vec<bool> = model.variables().iter().map(|v| v.kind == VarKind::Binary).collect();
    let Some(lp) = WarmLp::new(&LpData::from_model(model), &is_binary) else {
        return Ok(MilpSolution::without_point(SolveStatus::Infeasible, 0, 0));
    };
    let mut search = Search {
        model,
        lp,
        binaries,
        incumbent: None,
        nodes: 0,
        iterations: 0,
    };

    let root = search.solve_with(&[])?;
    match root.status {
        LpStatus::Infeasible => {
            return Ok(MilpSolution::without_point(
                SolveStatus::Infeasible,
                search.nodes,
                search.iterations,
            ))
        }
        LpStatus::Unbounded => {
            return Ok(MilpSolution::without_point(
                SolveStatus::Unbounded,
                search.nodes,
                search.iterations,
            ))
        }
        LpStatus::Optimal => {}
    }
    if !model.start().is_empty() {
        let fixings: Vec<(usize, f64)> = model
            .start()
            .iter()
            .filter(|(v, _)| is_binary[v.0])
            .map(|&(v, b)| (v.0, if b { 1.0 } else { 0.0 }))
            .collect();
        let out = search.solve_with(&fixings)?;
        if out.status == LpStatus::Optimal && search.branching_variable(&out.x).is_none() {
            search.offer(&out);
        }
    }
    let root_bound = search.objective(&root);
    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    // smallest bound of any region discarded by the pruning test
    let mut pruned = f64::INFINITY;
    let mut dive: Option<Node> = None;
    match search.branching_variable(&root.x) {
        None => search.try_incumbent(&root.x)?,
        Some(j) => {
            // rounding heuristics before the search proper
            search.try_incumbent(&root.x)?;
            search.round_heuristic(&[], &root.x)?;
            dive = Some(Node {
                bound: root_bound,
                depth: 0,
                id: next_id,
                fixings: Vec::new(),
                branch_var: j,
                branch_value: root.x[j],
            });
            next_id += 1;
        }
    }

    let mut stopped_by_limit = false;
    loop {
        let node = match dive.take().or_else(|| heap.pop()) {
            Some(n) => n,
            None => break,
        };
        if node.bound >= search.prune_threshold(limits) {
            pruned = pruned.min(node.bound);
            if heap.peek().is_none_or(|n: &Node| n.bound >= node.bound) {
                // best-bound order: every remaining node is at least as large
                heap.clear();
            }
            continue;
        }
        if search.nodes >= limits.max_nodes
            || limits.time.is_some_and(|t| start.elapsed() >= t)
        {
            heap.push(node);
            stopped_by_limit = true;
            break;
        }
        let preferred = node.branch_value.round();
        let mut children = Vec::with_capacity(2);
        for value in [preferred, 1.0 - preferred] {
            let mut fixings = node.fixings.clone();
            fixings.push((node.branch_var, value));
            let out = search.solve_with(&fixings)?;
            if out.status != LpStatus::Optimal {
                continue;
            }
            let bound = search.objective(&out).max(node.bound);
            if bound >= search.prune_threshold(limits) {
                pruned = pruned.min(bound);
                continue;
            }
            match search.branching_variable(&out.x) {
                None => {
                    search.try_incumbent(&out.x)?;
                    pruned = pruned.min(bound);
                }
                Some(j) => {
                    if node.depth % HEURISTIC_DEPTH_STRIDE == HEURISTIC_DEPTH_STRIDE - 1 {
                        search.round_heuristic(&fixings, &out.x)?;
                    }
                    children.push(Node {
                        bound,
                        depth: node.depth + 1,
                        id: next_id,
                        fixings,
                        branch_var: j,
                        branch_value: out.x[j],
                    });
                    next_id += 1;
                }
            }
        }
        let mut children = children.into_iter();
        if search.incumbent.is_none() {
            dive = children.next();
        }
        heap.extend(children);
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let Some((objective, mut values)) = search.incumbent.take() else {
        let status = if stopped_by_limit {
            SolveStatus::NodeLimit
        } else {
            SolveStatus::Infeasible
        };
        return Ok(MilpSolution::without_point(
            status,
            search.nodes,
            search.iterations,
        ));
    };
    model.snap_to_bounds(&mut values);
    let bound = if stopped_by_limit {
        open_bound.min(pruned).min(objective)
    } else {
        pruned.max(root_bound).min(objective)
    };
    let gap = (objective - bound).max(0.0) / objective.abs().max(1.0);
    let status = if stopped_by_limit {
        SolveStatus::NodeLimit
    } else if gap <= DEFAULT_REL_GAP || objective - bound <= limits.abs_gap {
        SolveStatus::Optimal
    } else {
        SolveStatus::GapLimit
    };
    Ok(MilpSolution {
        status,
        objective,
        bound,
        values,
        gap,
        nodes: search.nodes,
        lp_iterations: search.iterations,
    })
}
