//! Mixed-integer linear programming for desk-scale unit-commitment models.
//!
//! The engine solves
//!
//! ```text
//! minimize    c^T x + c0
//! subject to  lo_i <= a_i^T x <= hi_i      (one row per constraint)
//!             l_j <= x_j <= u_j
//!             x_j in {0, 1} for binary j
//! ```
//!
//! LP relaxations are handled by a dense-tableau bounded primal simplex
//! (composite phase 1, Harris ratio test, Bland's rule after a run of
//! degenerate pivots). Node relaxations reuse the previous basis through a
//! dual simplex pass and fall back to a cold start when it stalls.
//! Binaries are resolved by branch-and-bound on the most fractional
//! variable: bound propagation on binary rows at every node, a depth-first
//! dive until the first incumbent, best-bound afterwards, and periodic
//! fix-and-propagate rounding. A caller-supplied start point seeds the
//! incumbent.
//!
//! Any backend that implements [`MilpSolver`] can stand in for the embedded
//! engine; [`EmbeddedSolver`] is the reference.

mod branch;
mod error;
mod lp;
mod lp_format;
mod model;
mod presolve;

pub use branch::solve_milp;
pub use error::{MilpError, MilpResult};
pub use lp::solve_lp;
pub use lp_format::write_lp;
pub use model::{
    Constraint, ConstraintId, Limits, MilpModel, MilpSolution, Sense, SolveStatus, VarId, VarKind,
    Variable,
};

/// LP primal feasibility tolerance (absolute, on unscaled rows).
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Distance from {0, 1} below which a binary counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Default relative MIP gap.
pub const DEFAULT_REL_GAP: f64 = 1e-6;
/// Size cap for the dense engine (variables and constraints each).
pub const MAX_DIMENSION: usize = 5_000;

/// A MILP backend.
pub trait MilpSolver {
    fn solve(&self, model: &MilpModel, limits: &Limits) -> MilpResult<MilpSolution>;
}

/// The embedded simplex + branch-and-bound engine.
#[derive(Clone, Copy, Debug, Default)]
pub struct EmbeddedSolver;

impl MilpSolver for EmbeddedSolver {
    fn solve(&self, model: &MilpModel, limits: &Limits) -> MilpResult<MilpSolution> {
        solve_milp(model, limits)
    }
}
