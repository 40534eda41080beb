//! Light reductions applied before every LP solve: fixed columns are
//! substituted out, empty and singleton rows become bound checks or bound
//! tightenings, and rows whose activity range already lies within their
//! bounds are dropped. Branch-and-bound fixes binaries through bounds, so
//! deep nodes shrink considerably.

use crate::lp::{LpData, Row};

const FIX_TOL: f64 = 1e-11;

fn feas_tol(bound: f64) -> f64 {
    1e-9 * (1.0 + bound.abs())
}

pub(crate) struct Reduced {
    pub lp: LpData,
    /// Original column index of each reduced column.
    pub col_map: Vec<usize>,
    /// Values of columns removed as fixed, indexed by original column.
    pub fixed: Vec<Option<f64>>,
}

impl Reduced {
    pub fn expand(&self, reduced_x: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &j) in self.col_map.iter().enumerate() {
            x[j] = reduced_x[k];
        }
        x
    }
}

pub(crate) enum Presolved {
    Reduced(Reduced),
    Infeasible,
}

pub(crate) fn presolve(lp: &LpData, lower: &[f64], upper: &[f64]) -> Presolved {
    let n = lp.lower.len();
    let mut lower = lower.to_vec();
    let mut upper = upper.to_vec();
    let mut active = vec![true; lp.rows.len()];

    let is_fixed = |lo: f64, hi: f64| hi - lo <= FIX_TOL;

    for _pass in 0..8 {
        let mut changed = false;
        for (ri, row) in lp.rows.iter().enumerate() {
            if !active[ri] {
                continue;
            }
            let mut constant = 0.0;
            let mut free_terms = 0usize;
            let mut single = (0usize, 0.0f64);
            let mut min_act = 0.0f64;
            let mut max_act = 0.0f64;
            for &(j, a) in &row.terms {
                if is_fixed(lower[j], upper[j]) {
                    constant += a * lower[j];
                    continue;
                }
                free_terms += 1;
                single = (j, a);
                let (lo_c, hi_c) = if a > 0.0 {
                    (a * lower[j], a * upper[j])
                } else {
                    (a * upper[j], a * lower[j])
                };
                min_act += lo_c;
                max_act += hi_c;
            }
            let lo = row.lo - constant;
            let hi = row.hi - constant;
            if free_terms == 0 {
                if lo > feas_tol(row.lo) || hi < -feas_tol(row.hi) {
                    return Presolved::Infeasible;
                }
                active[ri] = false;
                changed = true;
                continue;
            }
            if free_terms == 1 {
                let (j, a) = single;
                let (mut new_lo, mut new_hi) = if a > 0.0 {
                    (lo / a, hi / a)
                } else {
                    (hi / a, lo / a)
                };
                if new_lo.is_nan() {
                    new_lo = f64::NEG_INFINITY;
                }
                if new_hi.is_nan() {
                    new_hi = f64::INFINITY;
                }
                let l = lower[j].max(new_lo);
                let u = upper[j].min(new_hi);
                if l > u {
                    if l - u > feas_tol(l.abs().max(u.abs())) {
                        return Presolved::Infeasible;
                    }
                    let mid = 0.5 * (l + u);
                    lower[j] = mid;
                    upper[j] = mid;
                } else {
                    lower[j] = l;
                    upper[j] = u;
                }
                active[ri] = false;
                changed = true;
                continue;
            }
            if max_act < lo - feas_tol(lo) || min_act > hi + feas_tol(hi) {
                return Presolved::Infeasible;
            }
            if min_act >= lo - feas_tol(lo) && max_act <= hi + feas_tol(hi) {
                active[ri] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut fixed = vec![None; n];
    let mut col_map = Vec::new();
    let mut new_index = vec![usize::MAX; n];
    for j in 0..n {
        if is_fixed(lower[j], upper[j]) {
            fixed[j] = Some(lower[j]);
        } else {
            new_index[j] = col_map.len();
            col_map.push(j);
        }
    }
    let mut rows = Vec::new();
    for (ri, row) in lp.rows.iter().enumerate() {
        if !active[ri] {
            continue;
        }
        let mut constant = 0.0;
        let mut terms = Vec::with_capacity(row.terms.len());
        for &(j, a) in &row.terms {
            match fixed[j] {
                Some(v) => constant += a * v,
                None => terms.push((new_index[j], a)),
            }
        }
        rows.push(Row {
            terms,
            lo: row.lo - constant,
            hi: row.hi - constant,
        });
    }
    let reduced = LpData {
        lower: col_map.iter().map(|&j| lower[j]).collect(),
        upper: col_map.iter().map(|&j| upper[j]).collect(),
        cost: col_map.iter().map(|&j| lp.cost[j]).collect(),
        rows,
    };
    Presolved::Reduced(Reduced {
        lp: reduced,
        col_map,
        fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(terms: &[(usize, f64)], lo: f64, hi: f64) -> Row {
        Row {
            terms: terms.to_vec(),
            lo,
            hi,
        }
    }

    #[test]
    fn singleton_rows_become_bounds() {
        let lp = LpData {
            lower: vec![0.0, 0.0],
            upper: vec![10.0, 10.0],
            cost: vec![1.0, 1.0],
            rows: vec![row(&[(0, 2.0)], 4.0, f64::INFINITY), row(&[(0, 1.0), (1, 1.0)], f64::NEG_INFINITY, 5.0)],
        };
        let Presolved::Reduced(r) = presolve(&lp, &lp.lower, &lp.upper) else {
            panic!("unexpected infeasible")
        };
        assert_eq!(r.lp.lower[0], 2.0);
        assert_eq!(r.lp.rows.len(), 1);
    }

    #[test]
    fn fixed_columns_fold_into_rows() {
        let lp = LpData {
            lower: vec![1.0, 0.0, 0.0],
            upper: vec![1.0, 5.0, 5.0],
            cost: vec![3.0, 1.0, 1.0],
            rows: vec![row(&[(0, 2.0), (1, 1.0), (2, 1.0)], 4.0, 4.0)],
        };
        let Presolved::Reduced(r) = presolve(&lp, &lp.lower, &lp.upper) else {
            panic!("unexpected infeasible")
        };
        assert_eq!(r.col_map, vec![1, 2]);
        assert_eq!(r.expand(&[0.5, 1.5]), vec![1.0, 0.5, 1.5]);
        assert_eq!(r.lp.rows[0].lo, 2.0);
    }

    #[test]
    fn detects_conflicting_bounds() {
        let lp = LpData {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            cost: vec![0.0, 0.0],
            rows: vec![
                row(&[(0, 1.0)], f64::NEG_INFINITY, 0.2),
                row(&[(0, 2.0)], 1.0, f64::INFINITY),
            ],
        };
        assert!(matches!(presolve(&lp, &lp.lower, &lp.upper), Presolved::Infeasible));
    }
}
