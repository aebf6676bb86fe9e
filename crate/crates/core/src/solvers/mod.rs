//! Simplex-constrained regression solvers.
//!
//! All three solve `min loss(y - X pi)` over the probability simplex
//! `pi >= 0, sum pi = 1`:
//!
//! - least squares: monotone accelerated projected gradient on the QP form,
//!   step `1/lambda_max(2 X^T X)`, exact simplex projection;
//! - least absolute deviation: the linear-programming reformulation with
//!   artificial variables `u >= +/-(y - X pi)`, solved exactly by a
//!   two-phase primal simplex method;
//! - Hellinger divergence `1 - sum_i sqrt(y_i (X pi)_i)`: projected gradient
//!   descent with backtracking line search (the objective is convex on the
//!   simplex, so the local optimum found is global).
//!
//! Convergence for the gradient methods is certified by the Frank-Wolfe gap:
//! for convex `f`, `f(x) - f* <= <grad f(x), x> - min_j grad f(x)_j` on the
//! simplex, so stopping at `gap <= tolerance` bounds the suboptimality.

mod lp;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{design_singular_values, symmetric_eigenvalues};
use crate::types::{ProportionVector, RegressionSystem, SolveResult};

/// Loss functions for the constrained regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    LeastSquares,
    LeastAbsoluteDeviation,
    Hellinger,
}

/// Solver settings. `tolerance` bounds the objective suboptimality for the
/// gradient methods and caps the pivot count for the LP method via
/// `max_iterations`. `hellinger_floor` is the epsilon added inside the
/// Hellinger square roots to keep the gradient finite near zero cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub loss: Loss,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub hellinger_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            loss: Loss::LeastSquares,
            tolerance: 1e-8,
            max_iterations: 10_000,
            hellinger_floor: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::Config(format!(
                "solver tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !self.hellinger_floor.is_finite() || self.hellinger_floor < 0.0 {
            return Err(Error::Config(format!(
                "hellinger_floor must be >= 0, got {}",
                self.hellinger_floor
            )));
        }
        Ok(())
    }
}

/// Dispatches to the solver matching `config.loss`.
pub fn solve(system: &RegressionSystem, config: &SolverConfig) -> Result<SolveResult> {
    match config.loss {
        Loss::LeastSquares => solve_least_squares(system, config),
        Loss::LeastAbsoluteDeviation => solve_least_absolute_deviation(system, config),
        Loss::Hellinger => solve_hellinger(system, config),
    }
}

/// Euclidean projection onto the probability simplex by the exact
/// sort-and-threshold method.
pub fn project_to_simplex(v: &[f64]) -> Result<ProportionVector> {
    if v.len() < 2 {
        return Err(Error::Contract(format!(
            "simplex projection needs K >= 2 entries, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "simplex projection of non-finite input".into(),
        ));
    }
    ProportionVector::new(simplex_projection(v))
}

/// Sort-and-threshold projection; assumes finite input of length >= 1.
fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let candidate = (cumulative - 1.0) / (i as f64 + 1.0);
        if ui - candidate > 0.0 {
            threshold = candidate;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

/// Classical binary adjustment: `clip((p' - fpr) / (tpr - fpr), 0, 1)`.
pub fn binary_adjusted_count(p_prime: f64, tpr: f64, fpr: f64) -> Result<f64> {
    for (name, v) in [("p_prime", p_prime), ("tpr", tpr), ("fpr", fpr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if tpr == fpr {
        return Err(Error::DegenerateClassifier(format!(
            "tpr == fpr == {tpr}: adjustment is undefined"
        )));
    }
    Ok(((p_prime - fpr) / (tpr - fpr)).clamp(0.0, 1.0))
}

fn require_rows(system: &RegressionSystem) -> Result<()> {
    if system.n_rows() == 0 {
        return Err(Error::Contract("regression system has no rows".into()));
    }
    Ok(())
}

/// Smallest singular value below `1e-10 *` largest means several simplex
/// points achieve (nearly) the same loss.
fn rank_deficient(system: &RegressionSystem) -> bool {
    let sv = design_singular_values(system.design());
    match (sv.first(), sv.last()) {
        (Some(&smax), Some(&smin)) => smin < 1e-10 * smax,
        _ => true,
    }
}

fn frank_wolfe_gap(x: &Array1<f64>, grad: &Array1<f64>) -> f64 {
    let gmin = grad.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    x.iter().zip(grad.iter()).map(|(&xi, &gi)| xi * (gi - gmin)).sum()
}

/// Constrained least squares via monotone accelerated projected gradient.
pub fn solve_least_squares(
    system: &RegressionSystem,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let (result, _trace) = least_squares_with_trace(system, config)?;
    Ok(result)
}

/// As `solve_least_squares`, returning the per-iterate objective sequence
/// (non-increasing by construction; exercised by the property tests).
pub(crate) fn least_squares_with_trace(
    system: &RegressionSystem,
    config: &SolverConfig,
) -> Result<(SolveResult, Vec<f64>)> {
    config.validate()?;
    require_rows(system)?;
    let k = system.n_classes();
    let weights = system.effective_weights();
    let design = system.design();
    let target = system.target();

    // Weighted normal-equation pieces: G = X^T W X, b = X^T W y.
    let mut weighted_design = design.clone();
    for (i, mut row) in weighted_design.rows_mut().into_iter().enumerate() {
        row *= weights[i];
    }
    let gram = design.t().dot(&weighted_design);
    let rhs = weighted_design.t().dot(target);
    let lmax = symmetric_eigenvalues(&gram)
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    let non_unique = rank_deficient(system);

    let loss_at = |pi: &Array1<f64>| -> f64 {
        let r = target - &design.dot(pi);
        r.iter()
            .zip(weights.iter())
            .map(|(&ri, &wi)| wi * ri * ri)
            .sum()
    };
    let grad_at = |pi: &Array1<f64>| -> Array1<f64> { 2.0 * (gram.dot(pi) - &rhs) };

    let uniform = Array1::from_elem(k, 1.0 / k as f64);
    if lmax <= 0.0 {
        // All-zero design: every simplex point is optimal.
        let loss = loss_at(&uniform);
        let p = ProportionVector::new(uniform.to_vec())?;
        let result = SolveResult::from_solution(system, p, loss, 0, true, true);
        return Ok((result, vec![loss]));
    }
    let step = 1.0 / (2.0 * lmax);

    let mut x = uniform;
    let mut x_prev = x.clone();
    let mut fx = loss_at(&x);
    let mut momentum = x.clone();
    let mut t = 1.0f64;
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations {
        iterations = iter;
        let grad_m = grad_at(&momentum);
        let z = Array1::from_vec(simplex_projection(
            (&momentum - &(step * &grad_m)).as_slice().expect("contiguous"),
        ));
        let fz = loss_at(&z);
        // Monotone acceleration: keep the previous iterate when the
        // extrapolated step does not improve the objective.
        let (x_new, fx_new) = if fz <= fx { (z.clone(), fz) } else { (x.clone(), fx) };
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        momentum =
            &x_new + &((t / t_next) * (&z - &x_new)) + &(((t - 1.0) / t_next) * (&x_new - &x_prev));
        x_prev = x;
        x = x_new;
        fx = fx_new;
        t = t_next;
        trace.push(fx);

        let gap = frank_wolfe_gap(&x, &grad_at(&x));
        if gap <= config.tolerance {
            converged = true;
            break;
        }
    }

    let proportions = ProportionVector::new(x.to_vec())?;
    let result = SolveResult::from_solution(
        system,
        proportions,
        fx,
        iterations,
        converged,
        non_unique,
    );
    Ok((result, trace))
}

/// Constrained least absolute deviation via the LP reformulation
/// `min sum w_i u_i  s.t.  u >= y - X pi, u >= -(y - X pi), sum pi = 1,
/// pi >= 0`, solved exactly.
pub fn solve_least_absolute_deviation(
    system: &RegressionSystem,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    require_rows(system)?;
    let rows = system.n_rows();
    let k = system.n_classes();
    let weights = system.effective_weights();
    let design = system.design();
    let target = system.target();

    // Columns: pi (k) | u (rows) | s1 (rows) | s2 (rows).
    let n_cols = k + 3 * rows;
    let mut constraints = Array2::zeros((2 * rows + 1, n_cols));
    let mut rhs = vec![0.0; 2 * rows + 1];
    for i in 0..rows {
        for j in 0..k {
            constraints[[i, j]] = design[[i, j]];
            constraints[[rows + i, j]] = -design[[i, j]];
        }
        constraints[[i, k + i]] = 1.0; // u_i
        constraints[[i, k + rows + i]] = -1.0; // slack for u >= y - X pi
        constraints[[rows + i, k + i]] = 1.0;
        constraints[[rows + i, k + 2 * rows + i]] = -1.0; // slack for u >= -(y - X pi)
        rhs[i] = target[i];
        rhs[rows + i] = -target[i];
    }
    for j in 0..k {
        constraints[[2 * rows, j]] = 1.0;
    }
    rhs[2 * rows] = 1.0;

    let mut costs = vec![0.0; n_cols];
    for i in 0..rows {
        costs[k + i] = weights[i];
    }

    let lp = lp::StandardLp {
        constraints,
        rhs,
        costs,
    };
    let solution = lp::solve_standard_form(&lp, config.max_iterations)?;

    let mut pi = solution.x[..k].to_vec();
    for v in &mut pi {
        if *v < -1e-7 {
            return Err(Error::SolverFailure(format!(
                "LP returned infeasible proportion {v}"
            )));
        }
        *v = v.max(0.0);
    }
    let proportions = ProportionVector::new(pi)?;
    let residual = system.residual_for(&proportions);
    let loss: f64 = residual
        .iter()
        .zip(weights.iter())
        .map(|(&ri, &wi)| wi * ri.abs())
        .sum();
    debug_assert!(
        (solution.objective - loss).abs() <= 1e-6 * loss.abs().max(1.0),
        "LP objective {} disagrees with recomputed loss {loss}",
        solution.objective
    );
    Ok(SolveResult::from_solution(
        system,
        proportions,
        loss,
        solution.pivots,
        true,
        rank_deficient(system),
    ))
}

/// Hellinger-divergence minimization `min 1 - sum_i sqrt(y_i (X pi)_i)` via
/// projected gradient descent with backtracking line search. Requires a
/// distribution-valued system (nonnegative design and target).
pub fn solve_hellinger(system: &RegressionSystem, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    require_rows(system)?;
    let design = system.design();
    let target = system.target();
    if design.iter().any(|&v| v < 0.0) || target.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidSystem(
            "Hellinger loss requires nonnegative design and target \
             (distribution-valued transforms only)"
                .into(),
        ));
    }
    let k = system.n_classes();
    let weights = system.effective_weights();
    let floor = config.hellinger_floor;
    let non_unique = rank_deficient(system);

    // Terms with y_i == 0 contribute a constant and are skipped; with
    // floor == 0 a zero product cell is likewise never divided by.
    let objective = |pi: &Array1<f64>| -> f64 {
        let mixed = design.dot(pi);
        let mut total = 0.0;
        for i in 0..mixed.len() {
            if target[i] > 0.0 && weights[i] > 0.0 {
                total += weights[i] * (target[i] * mixed[i] + floor).sqrt();
            }
        }
        1.0 - total
    };
    let gradient = |pi: &Array1<f64>| -> Array1<f64> {
        let mixed = design.dot(pi);
        let mut g = Array1::zeros(k);
        for i in 0..mixed.len() {
            if target[i] <= 0.0 || weights[i] <= 0.0 {
                continue;
            }
            let denom_sq = target[i] * mixed[i] + floor;
            if denom_sq <= 0.0 {
                continue; // guarded evaluation at exact-zero cells
            }
            let coeff = weights[i] * target[i] / (2.0 * denom_sq.sqrt());
            for j in 0..k {
                g[j] -= coeff * design[[i, j]];
            }
        }
        g
    };

    let mut x = Array1::from_elem(k, 1.0 / k as f64);
    let mut fx = objective(&x);
    let mut step0 = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations {
        iterations = iter;
        let g = gradient(&x);
        if frank_wolfe_gap(&x, &g) <= config.tolerance {
            converged = true;
            break;
        }
        // Backtracking along the projection arc (Armijo condition).
        let mut alpha = step0;
        let mut accepted = None;
        while alpha > 1e-18 {
            let z = Array1::from_vec(simplex_projection(
                (&x - &(alpha * &g)).as_slice().expect("contiguous"),
            ));
            let fz = objective(&z);
            let directional: f64 = g
                .iter()
                .zip(z.iter().zip(x.iter()))
                .map(|(&gi, (&zi, &xi))| gi * (zi - xi))
                .sum();
            if fz <= fx + 1e-4 * directional {
                accepted = Some((z, fz));
                break;
            }
            alpha *= 0.5;
        }
        let Some((z, fz)) = accepted else {
            break; // line search exhausted: no further progress possible
        };
        if x.iter().zip(z.iter()).all(|(a, b)| a == b) || fz >= fx {
            x = z;
            break;
        }
        x = z;
        fx = fz;
        step0 = (alpha * 2.0).min(1e6);
    }
    if !converged {
        converged = frank_wolfe_gap(&x, &gradient(&x)) <= config.tolerance;
    }

    // Report the unfloored divergence, which is nonnegative by
    // Cauchy-Schwarz when both sides are distributions.
    let mixed = design.dot(&x);
    let reported: f64 = 1.0
        - (0..mixed.len())
            .map(|i| weights[i] * (target[i] * mixed[i]).max(0.0).sqrt())
            .sum::<f64>();
    let proportions = ProportionVector::new(x.to_vec())?;
    Ok(SolveResult::from_solution(
        system,
        proportions,
        reported,
        iterations,
        converged,
        non_unique,
    ))
}
