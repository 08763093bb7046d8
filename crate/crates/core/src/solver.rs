//! Damped Gauss–Newton (Levenberg–Marquardt) refinement of a trajectory
//! against the least-squares objective assembled in [`crate::cost`].
//!
//! The first trajectory point is held fixed at the observed position; the
//! remaining 2(N−1) coordinates are free. Each residual touches at most
//! three consecutive points, so the normal equations are built directly
//! from the sparse per-residual gradients.

use nalgebra::{DMatrix, DVector};

use crate::cost::{residual_entries, ContextSnapshot, CostParams, ResidualEntry};
use crate::geometry::Vec2;
use crate::trajectory::DiscreteTrajectory;

/// Termination and damping controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Trial-step budget; every linear solve counts, accepted or not.
    pub max_iterations: usize,
    pub lambda_init: f64,
    /// Damping multiplier on a rejected step.
    pub lambda_up: f64,
    /// Damping multiplier on an accepted step.
    pub lambda_down: f64,
    /// Stop when the objective gradient's infinity norm drops below this.
    pub g_tol: f64,
    /// Stop when an accepted step's relative cost decrease drops below this.
    pub f_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> SolverOptions {
        SolverOptions {
            max_iterations: 20,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.5,
            g_tol: 1e-8,
            f_tol: 1e-8,
        }
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trajectory: DiscreteTrajectory,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Trial steps consumed (≤ max_iterations).
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value;
    /// strictly decreasing by construction.
    pub cost_history: Vec<f64>,
    /// Present when the run aborted without optimizing (non-finite cost or
    /// context not covering the trajectory).
    pub abort_reason: Option<String>,
}

fn evaluate(
    ctx: &ContextSnapshot,
    params: &CostParams,
    traj: &DiscreteTrajectory,
) -> Result<(f64, Vec<ResidualEntry>), String> {
    let entries = residual_entries(ctx, params, traj).map_err(|e| e.to_string())?;
    let mut j = 0.0;
    for e in &entries {
        j += e.value * e.value;
        if !e.value.is_finite() {
            return Err("non-finite residual".to_string());
        }
        for (_, g) in &e.grads {
            if !g.x.is_finite() || !g.y.is_finite() {
                return Err("non-finite residual gradient".to_string());
            }
        }
    }
    Ok((j, entries))
}

/// JᵀJ and Jᵀr over the free coordinates (points 1..N−1 flattened x,y).
fn normal_equations(entries: &[ResidualEntry], n_points: usize) -> (DMatrix<f64>, DVector<f64>) {
    let m = 2 * (n_points - 1);
    let mut a = DMatrix::zeros(m, m);
    let mut jtr = DVector::zeros(m);
    let mut rows: Vec<(usize, f64)> = Vec::with_capacity(6);
    for e in entries {
        rows.clear();
        for (idx, g) in &e.grads {
            if *idx == 0 {
                continue; // anchored point
            }
            let base = 2 * (idx - 1);
            rows.push((base, g.x));
            rows.push((base + 1, g.y));
        }
        for &(i, gi) in &rows {
            jtr[i] += e.value * gi;
            for &(j, gj) in &rows {
                a[(i, j)] += gi * gj;
            }
        }
    }
    (a, jtr)
}

fn solve_damped(a: &DMatrix<f64>, jtr: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut damped = a.clone();
    for i in 0..damped.nrows() {
        damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
    }
    damped.cholesky().map(|ch| ch.solve(&(-jtr)))
}

fn apply_step(traj: &DiscreteTrajectory, delta: &DVector<f64>) -> DiscreteTrajectory {
    let mut out = traj.clone();
    for i in 1..traj.len() {
        let base = 2 * (i - 1);
        let p = traj.point(i);
        out.set_point(i, Vec2::new(p.x + delta[base], p.y + delta[base + 1]));
    }
    out
}

/// Minimize the trajectory objective starting from `init`, holding the
/// first point fixed. Accepted steps strictly decrease the objective; the
/// report carries the accepted-cost history for inspection.
pub fn optimize(
    init: &DiscreteTrajectory,
    ctx: &ContextSnapshot,
    params: &CostParams,
    opts: &SolverOptions,
) -> SolveReport {
    let abort = |reason: String| SolveReport {
        trajectory: init.clone(),
        initial_cost: f64::NAN,
        final_cost: f64::NAN,
        iterations: 0,
        converged: false,
        cost_history: vec![],
        abort_reason: Some(reason),
    };

    let n = init.len();
    if n < 2 {
        return abort("trajectory must have at least two points".to_string());
    }
    let (mut j_cur, mut entries) = match evaluate(ctx, params, init) {
        Ok(v) => v,
        Err(e) => return abort(e),
    };
    if !j_cur.is_finite() {
        return abort(format!("non-finite initial cost {j_cur}"));
    }

    let initial_cost = j_cur;
    let mut current = init.clone();
    let mut history = vec![j_cur];
    let mut lambda = opts.lambda_init;
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < opts.max_iterations {
        let (a, jtr) = normal_equations(&entries, n);
        let grad_inf = 2.0 * jtr.amax();
        if grad_inf < opts.g_tol {
            converged = true;
            break;
        }
        // keep the same linearization across rejected trials
        loop {
            if iterations >= opts.max_iterations {
                break 'outer;
            }
            iterations += 1;
            let Some(delta) = solve_damped(&a, &jtr, lambda) else {
                lambda *= opts.lambda_up;
                continue;
            };
            let trial = apply_step(&current, &delta);
            match evaluate(ctx, params, &trial) {
                Ok((j_new, e_new)) if j_new.is_finite() && j_new < j_cur => {
                    let rel = (j_cur - j_new) / j_cur.max(f64::MIN_POSITIVE);
                    current = trial;
                    j_cur = j_new;
                    entries = e_new;
                    history.push(j_cur);
                    lambda *= opts.lambda_down;
                    if rel < opts.f_tol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                // out-of-hull, non-finite, or non-decreasing: shrink the step
                _ => lambda *= opts.lambda_up,
            }
        }
    }

    SolveReport {
        trajectory: current,
        initial_cost,
        final_cost: j_cur,
        iterations,
        converged,
        cost_history: history,
        abort_reason: None,
    }
}
