//! Dense two-phase primal simplex for small standard-form LPs.
//!
//! Solves `min c^T x  s.t.  A x = b, x >= 0`. Pivoting uses Dantzig's rule
//! until the objective stalls, then switches to Bland's rule, which cannot
//! cycle. The problems fed in here are tiny (hundreds of rows), so a dense
//! tableau is the simplest correct tool.

use ndarray::Array2;

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const REDUCED_COST_EPS: f64 = 1e-10;
const FEASIBILITY_EPS: f64 = 1e-7;
/// Consecutive non-improving pivots before falling back to Bland's rule.
const STALL_LIMIT: usize = 32;

/// A standard-form linear program. Rows with negative right-hand sides are
/// sign-flipped on entry.
pub struct StandardLp {
    pub constraints: Array2<f64>,
    pub rhs: Vec<f64>,
    pub costs: Vec<f64>,
}

pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// m x (n_total + 1); last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row, same width as `rows` entries.
    cost: Vec<f64>,
    basis: Vec<usize>,
    n_structural: usize,
    n_total: usize,
    pivots: usize,
    max_pivots: usize,
    stalled: usize,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.n_total
    }

    /// Rebuilds the reduced-cost row for cost vector `c` (length n_total)
    /// under the current basis.
    fn set_costs(&mut self, c: &[f64]) {
        let rhs = self.rhs_col();
        let mut row = vec![0.0; self.n_total + 1];
        row[..self.n_total].copy_from_slice(c);
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = c[bi];
            if cb == 0.0 {
                continue;
            }
            for (rj, &tij) in row.iter_mut().zip(&self.rows[i]).take(rhs + 1) {
                *rj -= cb * tij;
            }
        }
        self.cost = row;
    }

    /// Entering column by Dantzig's rule (most negative reduced cost), or
    /// Bland's rule (lowest index) once the objective has stalled.
    /// Columns at `limit` and beyond are excluded (phase-2 artificials).
    fn entering(&self, limit: usize) -> Option<usize> {
        if self.stalled >= STALL_LIMIT {
            return (0..limit).find(|&j| self.cost[j] < -REDUCED_COST_EPS);
        }
        let mut best: Option<usize> = None;
        for j in 0..limit {
            if self.cost[j] < -REDUCED_COST_EPS
                && best.is_none_or(|b| self.cost[j] < self.cost[b])
            {
                best = Some(j);
            }
        }
        best
    }

    /// Leaving row by the minimum-ratio test; ties go to the lowest basis
    /// index (the Bland tie-break).
    fn leaving(&self, col: usize) -> Option<usize> {
        let rhs = self.rhs_col();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows.len() {
            let a = self.rows[i][col];
            if a <= PIVOT_EPS {
                continue;
            }
            let ratio = self.rows[i][rhs] / a;
            match best {
                None => best = Some((i, ratio)),
                Some((bi, br)) => {
                    if ratio < br - PIVOT_EPS
                        || ((ratio - br).abs() <= PIVOT_EPS && self.basis[i] < self.basis[bi])
                    {
                        best = Some((i, ratio));
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let rhs = self.rhs_col();
        let piv = self.rows[row][col];
        for j in 0..=rhs {
            self.rows[row][j] /= piv;
        }
        self.rows[row][col] = 1.0;
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..=rhs {
                self.rows[i][j] -= factor * self.rows[row][j];
            }
            self.rows[i][col] = 0.0;
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for j in 0..=rhs {
                self.cost[j] -= factor * self.rows[row][j];
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Runs simplex iterations until optimal for the current cost row.
    /// `limit` bounds the entering-column search.
    fn optimize(&mut self, limit: usize) -> Result<()> {
        loop {
            let Some(col) = self.entering(limit) else {
                return Ok(());
            };
            let Some(row) = self.leaving(col) else {
                return Err(Error::SolverFailure(
                    "linear program is unbounded".into(),
                ));
            };
            if self.pivots >= self.max_pivots {
                return Err(Error::SolverFailure(format!(
                    "simplex cycling guard exceeded after {} pivots \
                     (rows={}, cols={})",
                    self.pivots,
                    self.rows.len(),
                    self.n_structural
                )));
            }
            let before = self.cost[self.rhs_col()];
            self.pivot(row, col);
            let after = self.cost[self.rhs_col()];
            if (after - before).abs() <= 1e-14 * before.abs().max(1.0) {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
    }
}

/// Solves a standard-form LP; `max_pivots` is the anti-cycling hard stop.
pub fn solve_standard_form(lp: &StandardLp, max_pivots: usize) -> Result<LpSolution> {
    let m = lp.constraints.nrows();
    let n = lp.constraints.ncols();
    if lp.rhs.len() != m || lp.costs.len() != n {
        return Err(Error::Contract(format!(
            "LP shape mismatch: {}x{} constraints, {} rhs, {} costs",
            m,
            n,
            lp.rhs.len(),
            lp.costs.len()
        )));
    }
    let n_total = n + m; // structural + one artificial per row

    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; n_total + 1];
        let flip = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for (slot, &a) in row.iter_mut().zip(lp.constraints.row(i).iter()) {
            *slot = flip * a;
        }
        row[n + i] = 1.0;
        row[n_total] = flip * lp.rhs[i];
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        cost: vec![0.0; n_total + 1],
        basis: (n..n_total).collect(),
        n_structural: n,
        n_total,
        pivots: 0,
        max_pivots,
        stalled: 0,
    };

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; n_total];
    for c in phase1.iter_mut().skip(n) {
        *c = 1.0;
    }
    tab.set_costs(&phase1);
    tab.optimize(n_total)?;
    let infeasibility = -tab.cost[tab.rhs_col()];
    if infeasibility > FEASIBILITY_EPS {
        return Err(Error::SolverFailure(format!(
            "linear program infeasible (phase-1 objective {infeasibility:.3e})"
        )));
    }

    // Pivot any artificial still in the basis (at value zero) out onto a
    // structural column when one is available; redundant rows keep theirs.
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| tab.rows[i][j].abs() > PIVOT_EPS) {
                tab.pivot(i, col);
            }
        }
    }

    // Phase 2: the real objective; artificial columns may not re-enter.
    let mut phase2 = vec![0.0; n_total];
    phase2[..n].copy_from_slice(&lp.costs);
    tab.set_costs(&phase2);
    tab.optimize(n)?;

    let mut x = vec![0.0; n];
    for (i, &bi) in tab.basis.iter().enumerate() {
        if bi < n {
            x[bi] = tab.rows[i][tab.rhs_col()];
        }
    }
    let objective = lp
        .costs
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    Ok(LpSolution {
        x,
        objective,
        pivots: tab.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn solves_textbook_equality_lp() {
        // min -x1 - 2x2  s.t.  x1 + x2 + s = 4, x1 <= 2 (via slack), x >= 0.
        // Optimum at x1 = 0? No: -x1 - 2x2 minimized by x2 = 4, x1 = 0 -> -8.
        let lp = StandardLp {
            constraints: array![[1.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0]],
            rhs: vec![4.0, 2.0],
            costs: vec![-1.0, -2.0, 0.0, 0.0],
        };
        let sol = solve_standard_form(&lp, 1000).unwrap();
        assert_abs_diff_eq!(sol.objective, -8.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn handles_negative_rhs_rows() {
        // x1 - x2 = -1, x1 + x2 = 3  ->  x = (1, 2); min x1 = 1.
        let lp = StandardLp {
            constraints: array![[1.0, -1.0], [1.0, 1.0]],
            rhs: vec![-1.0, 3.0],
            costs: vec![1.0, 0.0],
        };
        let sol = solve_standard_form(&lp, 1000).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn reports_infeasible() {
        // x1 = 1 and x1 = 2 cannot both hold.
        let lp = StandardLp {
            constraints: array![[1.0], [1.0]],
            rhs: vec![1.0, 2.0],
            costs: vec![1.0],
        };
        assert!(solve_standard_form(&lp, 1000).is_err());
    }

    #[test]
    fn reports_unbounded() {
        // min -x1 with x1 - x2 = 0: x1 can grow without bound.
        let lp = StandardLp {
            constraints: array![[1.0, -1.0]],
            rhs: vec![0.0],
            costs: vec![-1.0, 0.0],
        };
        assert!(solve_standard_form(&lp, 1000).is_err());
    }

    #[test]
    fn pivot_cap_trips_solver_failure() {
        let lp = StandardLp {
            constraints: array![[1.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0]],
            rhs: vec![4.0, 2.0],
            costs: vec![-1.0, -2.0, 0.0, 0.0],
        };
        assert!(matches!(
            solve_standard_form(&lp, 0),
            Err(Error::SolverFailure(_))
        ));
    }
}
