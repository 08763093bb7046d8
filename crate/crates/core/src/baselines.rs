//! Extrapolation baselines: a degree-2 least-squares fit with an
//! acceleration regulator, and its constant-velocity (degree-1) limit.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::scenario::PoseSample;
use crate::trajectory::DiscreteTrajectory;

/// Default weight of the squared quadratic coefficient in the naive fit.
pub const DEFAULT_ACCEL_REGULATOR: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("need at least {needed} history samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("history times are degenerate")]
    DegenerateTimes,
}

/// Fit one coordinate with a degree-2 polynomial in (t − t_now),
/// penalizing the squared quadratic coefficient by `lambda_a`.
fn fit_quadratic(
    times: &[f64],
    values: &[f64],
    lambda_a: f64,
) -> Result<Vector3<f64>, BaselineError> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (&dt, &v) in times.iter().zip(values) {
        let phi = Vector3::new(1.0, dt, dt * dt);
        a += phi * phi.transpose();
        b += phi * v;
    }
    a[(2, 2)] += lambda_a;
    a.lu().solve(&b).ok_or(BaselineError::DegenerateTimes)
}

fn fit_linear(times: &[f64], values: &[f64]) -> Result<Vector2<f64>, BaselineError> {
    let mut a = Matrix2::zeros();
    let mut b = Vector2::zeros();
    for (&dt, &v) in times.iter().zip(values) {
        let phi = Vector2::new(1.0, dt);
        a += phi * phi.transpose();
        b += phi * v;
    }
    a.lu().solve(&b).ok_or(BaselineError::DegenerateTimes)
}

fn shifted_times(history: &[PoseSample]) -> Vec<f64> {
    let t_now = history.last().unwrap().t;
    history.iter().map(|s| s.t - t_now).collect()
}

/// Degree-2 polynomial extrapolation of the history, one fit per
/// coordinate, with the quadratic coefficient shrunk by `lambda_a`.
/// Point i sits at t_now + i·h.
pub fn naive_fit_baseline(
    history: &[PoseSample],
    n: usize,
    h: f64,
    lambda_a: f64,
) -> Result<DiscreteTrajectory, BaselineError> {
    if history.len() < 4 {
        return Err(BaselineError::TooFewSamples { needed: 4, got: history.len() });
    }
    let times = shifted_times(history);
    if times.iter().all(|&dt| dt == times[0]) {
        return Err(BaselineError::DegenerateTimes);
    }
    let xs: Vec<f64> = history.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = history.iter().map(|s| s.y).collect();
    let cx = fit_quadratic(&times, &xs, lambda_a)?;
    let cy = fit_quadratic(&times, &ys, lambda_a)?;
    let t_now = history.last().unwrap().t;
    let points = (0..n)
        .map(|i| {
            let dt = i as f64 * h;
            Vec2::new(
                cx[0] + cx[1] * dt + cx[2] * dt * dt,
                cy[0] + cy[1] * dt + cy[2] * dt * dt,
            )
        })
        .collect();
    Ok(DiscreteTrajectory::new(points, t_now, h))
}

/// Degree-1 least-squares extrapolation; the λ→∞ limit of the naive fit.
pub fn constant_velocity_baseline(
    history: &[PoseSample],
    n: usize,
    h: f64,
) -> Result<DiscreteTrajectory, BaselineError> {
    if history.len() < 2 {
        return Err(BaselineError::TooFewSamples { needed: 2, got: history.len() });
    }
    let times = shifted_times(history);
    if times.iter().all(|&dt| dt == times[0]) {
        return Err(BaselineError::DegenerateTimes);
    }
    let xs: Vec<f64> = history.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = history.iter().map(|s| s.y).collect();
    let cx = fit_linear(&times, &xs)?;
    let cy = fit_linear(&times, &ys)?;
    let t_now = history.last().unwrap().t;
    let points = (0..n)
        .map(|i| {
            let dt = i as f64 * h;
            Vec2::new(cx[0] + cx[1] * dt, cy[0] + cy[1] * dt)
        })
        .collect();
    Ok(DiscreteTrajectory::new(points, t_now, h))
}
