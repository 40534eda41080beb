use std::collections::HashMap;
use std::time::Duration;

use crate::error::{MilpError, MilpResult};
use crate::{DEFAULT_REL_GAP, INTEGRALITY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Row bounds `(lo, hi)` implied by the sense.
    pub fn row_bounds(&self) -> (f64, f64) {
        match self.sense {
            Sense::Le => (f64::NEG_INFINITY, self.rhs),
            Sense::Ge => (self.rhs, f64::INFINITY),
            Sense::Eq => (self.rhs, self.rhs),
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        let (lo, hi) = self.row_bounds();
        (lo - act).max(act - hi).max(0.0)
    }
}

/// A minimization MILP over continuous and binary variables.
#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<f64>,
    objective_constant: f64,
    names: HashMap<String, VarId>,
    start: Vec<(VarId, bool)>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> MilpResult<VarId> {
        let name = name.into();
        if self.names.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(MilpError::InvalidBounds {
                name,
                reason: format!("lower {lower} exceeds upper {upper}"),
            });
        }
        if kind == VarKind::Binary && (lower < 0.0 || upper > 1.0) {
            return Err(MilpError::InvalidBounds {
                name,
                reason: format!("binary bounds [{lower}, {upper}] not within [0, 1]"),
            });
        }
        let id = VarId(self.variables.len());
        self.names.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            lower,
            upper,
            kind,
        });
        self.objective.push(0.0);
        Ok(id)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> MilpResult<VarId> {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn add_continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> MilpResult<VarId> {
        self.add_var(name, lower, upper, VarKind::Continuous)
    }

    /// Adds a row; repeated variables in `terms` are merged and exact zeros dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: &[(VarId, f64)],
        sense: Sense,
        rhs: f64,
    ) -> MilpResult<ConstraintId> {
        let name = name.into();
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for &(v, a) in terms {
            if v.0 >= self.variables.len() {
                return Err(MilpError::UnknownVariable {
                    constraint: name,
                    index: v.0,
                });
            }
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some((_, b)) => *b += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        let id = ConstraintId(self.constraints.len());
        self.constraints.push(Constraint {
            name,
            terms: merged,
            sense,
            rhs,
        });
        Ok(id)
    }

    pub fn set_objective_coef(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] = coef;
    }

    pub fn add_objective_coef(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] += coef;
    }

    pub fn set_objective_constant(&mut self, c: f64) {
        self.objective_constant = c;
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective_constant += c;
    }

    /// Overwrites the bounds of a variable (used to fix binaries).
    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn fix(&mut self, var: VarId, value: f64) {
        self.set_bounds(var, value, value);
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0]
    }

    /// Clamps simplex round-off back inside each variable's bounds.
    pub(crate) fn snap_to_bounds(&self, x: &mut [f64]) {
        for (v, xj) in self.variables.iter().zip(x.iter_mut()) {
            *xj = xj.clamp(v.lower, v.upper);
        }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn binary_ids(&self) -> Vec<VarId> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn evaluate_objective(&self, x: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Largest bound or row violation of `x`, and the largest distance of a
    /// binary from {0, 1}.
    pub fn max_violation(&self, x: &[f64]) -> (f64, f64) {
        let mut primal: f64 = 0.0;
        let mut integral: f64 = 0.0;
        for (v, &val) in self.variables.iter().zip(x) {
            primal = primal.max(v.lower - val).max(val - v.upper);
            if v.kind == VarKind::Binary {
                integral = integral.max((val - val.round()).abs());
            }
        }
        for c in &self.constraints {
            primal = primal.max(c.violation(x));
        }
        (primal, integral)
    }

    /// Binary values tried as the first incumbent; the continuous part is
    /// re-optimized. An infeasible start is ignored.
    pub fn set_start(&mut self, values: Vec<(VarId, bool)>) {
        self.start = values;
    }

    pub fn start(&self) -> &[(VarId, bool)] {
        &self.start
    }

    pub(crate) fn check_size(&self) -> MilpResult<()> {
        let cap = crate::MAX_DIMENSION;
        if self.variables.len() > cap || self.constraints.len() > cap {
            return Err(MilpError::ModelTooLarge {
                vars: self.variables.len(),
                rows: self.constraints.len(),
                cap,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Search stopped with an incumbent inside the caller's gap limit but
    /// outside the default optimality gap.
    GapLimit,
    /// Node or time budget exhausted; the incumbent (if any) is returned.
    NodeLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit | SolveStatus::NodeLimit)
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub objective: f64,
    /// Best proven lower bound on the optimum.
    pub bound: f64,
    pub values: Vec<f64>,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

impl MilpSolution {
    pub(crate) fn without_point(status: SolveStatus, nodes: usize, iters: usize) -> Self {
        let objective = match status {
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            objective,
            bound: objective,
            values: Vec::new(),
            gap: f64::INFINITY,
            nodes,
            lp_iterations: iters,
        }
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    /// Binary value rounded to the nearest integer.
    pub fn binary(&self, var: VarId) -> bool {
        self.values[var.0] > 0.5
    }

    pub fn is_integral(&self, model: &MilpModel) -> bool {
        model.max_violation(&self.values).1 <= INTEGRALITY_TOL
    }
}

#[derive(Clone, Debug)]
pub struct Limits {
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)` at which the search stops.
    pub rel_gap: f64,
    /// Absolute gap at which the search stops.
    pub abs_gap: f64,
    pub max_nodes: usize,
    pub time: Option<Duration>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            rel_gap: DEFAULT_REL_GAP,
            abs_gap: 1e-9,
            max_nodes: 200_000,
            time: None,
        }
    }
}

impl Limits {
    /// Limits for proving optimality to (near) machine precision on small models.
    pub fn exact() -> Self {
        Self {
            rel_gap: 0.0,
            abs_gap: 1e-9,
            ..Self::default()
        }
    }

    pub fn with_rel_gap(mut self, gap: f64) -> Self {
        self.rel_gap = gap;
        self
    }

    pub fn with_max_nodes(mut self, nodes: usize) -> Self {
        self.max_nodes = nodes;
        self
    }

    pub fn with_time(mut self, time: Duration) -> Self {
        self.time = Some(time);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names_and_bad_binary_bounds() {
        let mut m = MilpModel::new();
        m.add_continuous("x", 0.0, 1.0).unwrap();
        assert_eq!(
            m.add_continuous("x", 0.0, 1.0),
            Err(MilpError::DuplicateName("x".into()))
        );
        assert!(m.add_var("b", 0.0, 2.0, VarKind::Binary).is_err());
        assert!(m.add_continuous("y", 2.0, 1.0).is_err());
    }

    #[test]
    fn merges_repeated_terms() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_constraint("c", &[(x, 1.0), (y, 2.0), (x, -1.0)], Sense::Le, 1.0)
            .unwrap();
        assert_eq!(m.constraints()[0].terms, vec![(y, 2.0)]);
        assert!(m
            .add_constraint("bad", &[(VarId(7), 1.0)], Sense::Le, 0.0)
            .is_err());
    }
}
