//! Bridge from a policy distribution to an optimizer initial guess:
//! prune policies whose reference line cannot be built at the current
//! pose, pick the most likely survivor, and march an initial trajectory
//! along its reference line.

use thiserror::Error;

use crate::cost::{total_cost, ContextSnapshot, CostParams};
use crate::lanes::{extract_reference_line, ReferenceLine};
use crate::policy::{PolicyDistribution, PolicyLabel};
use crate::scenario::{PoseSample, Scenario};
use crate::sdf::FieldError;
use crate::trajectory::DiscreteTrajectory;

/// Deceleration of the yield speed profile, m/s².
pub const YIELD_DECEL: f64 = 1.0;

#[derive(Debug, Error)]
pub enum InterpreterError {
    /// No policy with nonzero probability survived the feasibility test;
    /// carries the distribution for the caller's fallback path.
    #[error("no feasible policy at this pose (probabilities {probs:?})")]
    AllInfeasible { probs: [f64; 6] },
}

/// Per-step speeds of the initial guess: start at `v0` and move toward
/// `target` by at most `ramp·h` per step. Entry k is the speed over the
/// step from point k to point k+1.
fn speed_profile(v0: f64, target: f64, ramp: f64, n: usize, h: f64) -> Vec<f64> {
    let mut v = v0;
    (0..n.saturating_sub(1))
        .map(|_| {
            let dv = (target - v).clamp(-ramp * h, ramp * h);
            v += dv;
            v.max(0.0)
        })
        .collect()
}

/// Select the most likely feasible policy and synthesize its initial
/// trajectory. `v_trend` is the speed the observed history implies; the
/// marching target is min(reference speed limit, v_trend), or 0 for a
/// yield. Ramp rate is `params.a_max` (yields use the gentler
/// [`YIELD_DECEL`]).
pub fn interpret(
    dist: &PolicyDistribution,
    scenario: &Scenario,
    pose: &PoseSample,
    v_trend: f64,
    n: usize,
    h: f64,
    params: &CostParams,
) -> Result<(PolicyLabel, DiscreteTrajectory, ReferenceLine), InterpreterError> {
    // worst-case march distance bounds the reference horizon we need
    let v_peak = pose.v.max(v_trend).max(1.0);
    let horizon = v_peak * (n as f64) * h + 15.0;

    let mut best: Option<(PolicyLabel, ReferenceLine)> = None;
    for label in PolicyLabel::ALL {
        let p = dist.probs[label.index()];
        if !(p > 0.0) {
            continue;
        }
        if best.as_ref().map_or(false, |(b, _)| dist.probs[b.index()] >= p) {
            continue; // cannot beat the incumbent (ties keep label order)
        }
        if let Ok(reference) = extract_reference_line(scenario, pose, label, horizon) {
            best = Some((label, reference));
        }
    }
    let Some((policy, mut reference)) = best else {
        return Err(InterpreterError::AllInfeasible { probs: dist.probs });
    };

    let proj = reference.project(pose.position());
    // Tighten the line's speed limit to what its curvature sustains within
    // the acceleration bound over the reachable stretch, so both the march
    // and the desired-speed term ask for an attainable speed on turns.
    let reach = pose.v.max(reference.speed_limit).max(1.0) * (n as f64) * h;
    let kappa = reference.max_curvature_between(proj.arc_length, proj.arc_length + reach);
    if kappa > 1e-9 {
        reference.speed_limit = reference.speed_limit.min((0.9 * params.a_max / kappa).sqrt());
    }
    let (target, ramp) = if policy == PolicyLabel::Yield {
        (0.0, YIELD_DECEL)
    } else {
        (reference.speed_limit.min(v_trend.max(0.0)), params.a_max)
    };
    let speeds = speed_profile(pose.v, target, ramp, n, h);
    let init = march(&reference, proj.arc_length, &speeds, pose.t, h);
    Ok((policy, init, reference))
}

/// Walk `speeds` along the reference from arc length `s0`; point k+1 lies
/// `speeds[k]·h` further along than point k.
fn march(
    reference: &ReferenceLine,
    s0: f64,
    speeds: &[f64],
    t0: f64,
    h: f64,
) -> DiscreteTrajectory {
    let mut s = s0;
    let mut points = Vec::with_capacity(speeds.len() + 1);
    points.push(reference.point_at(s));
    for v in speeds {
        s += v * h;
        points.push(reference.point_at(s));
    }
    DiscreteTrajectory::new(points, t0, h)
}

/// Initial guess that brakes at `decel` from the pose's speed down to rest
/// while tracking the reference line; an alternative seed for scenes where
/// stopping may beat continuing.
pub fn braking_guess(
    reference: &ReferenceLine,
    pose: &PoseSample,
    n: usize,
    h: f64,
    decel: f64,
) -> DiscreteTrajectory {
    let speeds = speed_profile(pose.v, 0.0, decel, n, h);
    let proj = reference.project(pose.position());
    march(reference, proj.arc_length, &speeds, pose.t, h)
}

/// Objective value of an initial guess; a diagnostics regression guard.
pub fn initial_guess_cost_sanity(
    init: &DiscreteTrajectory,
    ctx: &ContextSnapshot,
    params: &CostParams,
) -> Result<f64, FieldError> {
    total_cost(ctx, params, init).map(|(j, _)| j)
}
