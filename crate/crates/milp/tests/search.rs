//! Search controls: caller-supplied starts, node limits, gap reporting.

use psps_milp::{solve_milp, Limits, MilpModel, Sense, SolveStatus, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Knapsack with `n` items: maximize value (as a minimization).
fn knapsack(seed: u64, n: usize) -> (MilpModel, Vec<VarId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MilpModel::new();
    let x: Vec<VarId> = (0..n).map(|j| m.add_binary(format!("x{j}")).unwrap()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..20.0)).collect();
    for (&v, wj) in x.iter().zip(&w) {
        m.set_objective_coef(v, -(wj + rng.gen_range(0.0..5.0)));
    }
    let terms: Vec<(VarId, f64)> = x.iter().copied().zip(w.iter().copied()).collect();
    m.add_constraint("cap", &terms, Sense::Le, w.iter().sum::<f64>() * 0.4).unwrap();
    (m, x)
}

#[test]
fn start_does_not_change_the_optimum() {
    for seed in 0..20 {
        let (mut m, x) = knapsack(seed, 14);
        let plain = solve_milp(&m, &Limits::exact()).unwrap();
        // a feasible but poor start: nothing packed
        m.set_start(x.iter().map(|&v| (v, false)).collect());
        let started = solve_milp(&m, &Limits::exact()).unwrap();
        assert_eq!(started.status, SolveStatus::Optimal);
        assert!((started.objective - plain.objective).abs() <= 1e-9 * plain.objective.abs().max(1.0));
        // an infeasible start is ignored
        m.set_start(x.iter().map(|&v| (v, true)).collect());
        let ignored = solve_milp(&m, &Limits::exact()).unwrap();
        assert!((ignored.objective - plain.objective).abs() <= 1e-9 * plain.objective.abs().max(1.0));
    }
}

#[test]
fn optimal_start_is_returned_under_a_one_node_limit() {
    let (mut m, x) = knapsack(3, 18);
    let best = solve_milp(&m, &Limits::exact()).unwrap();
    m.set_start(x.iter().map(|&v| (v, best.binary(v))).collect());
    let s = solve_milp(&m, &Limits::exact().with_max_nodes(1)).unwrap();
    assert!(s.status.has_solution());
    assert!(s.objective <= best.objective + 1e-9 * best.objective.abs());
}

#[test]
fn node_limit_reports_an_honest_gap() {
    let (m, _) = knapsack(11, 30);
    let s = solve_milp(&m, &Limits::exact().with_max_nodes(3)).unwrap();
    match s.status {
        SolveStatus::Optimal => assert!(s.gap <= psps_milp::DEFAULT_REL_GAP),
        SolveStatus::NodeLimit => {
            assert!(s.nodes <= 3);
            if !s.values.is_empty() {
                assert!(s.bound <= s.objective + 1e-9);
                assert!(s.gap >= 0.0);
                assert!(m.max_violation(&s.values).0 <= 1e-8);
            }
        }
        other => panic!("unexpected status {other:?}"),
    }
}

#[test]
fn infeasible_and_unbounded_models() {
    let mut m = MilpModel::new();
    let b = m.add_binary("b").unwrap();
    m.add_constraint("r", &[(b, 1.0)], Sense::Ge, 2.0).unwrap();
    assert_eq!(solve_milp(&m, &Limits::default()).unwrap().status, SolveStatus::Infeasible);

    let mut m = MilpModel::new();
    let b = m.add_binary("b").unwrap();
    let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY).unwrap();
    m.set_objective_coef(y, 1.0);
    m.add_constraint("r", &[(y, 1.0), (b, 1.0)], Sense::Le, 3.0).unwrap();
    assert_eq!(solve_milp(&m, &Limits::default()).unwrap().status, SolveStatus::Unbounded);
}
