//! End-to-end single-vehicle prediction: gather the observation window,
//! classify the likely maneuver, synthesize an initial guess, build the
//! cost context around the vehicle, and refine by nonlinear least squares.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use thiserror::Error;

use crate::baselines::{naive_fit_baseline, BaselineError, DEFAULT_ACCEL_REGULATOR};
use crate::cost::{total_cost, ContextSnapshot, CostBreakdown, CostParams};
use crate::geometry::{segments_intersect, Rect, Vec2};
use crate::interpreter::{braking_guess, interpret, InterpreterError};
use crate::policy::{ObservationWindow, PolicyError, PolicyLabel, RecurrentClassifier};
use crate::scenario::{AgentKind, LightState, PoseSample, Scenario};
use crate::sdf::FieldError;
use crate::solver::{optimize, SolverOptions};
use crate::trajectory::DiscreteTrajectory;

/// Observation window length in frames.
pub const DEFAULT_OBSERVATION_FRAMES: usize = 40;
/// Predicted trajectory length in points (4 s at a 0.1 s step).
pub const DEFAULT_PREDICTION_POINTS: usize = 40;

#[derive(Debug, Clone)]
pub struct PredictorConfig {
    pub observation_frames: usize,
    pub prediction_points: usize,
    /// Cost-field grid resolution, meters per cell.
    pub cell_size: f64,
    /// Half side of the base square context region, meters.
    pub region_half_extent: f64,
    /// The base region is centered this far ahead of the pose, meters.
    pub region_look_ahead: f64,
    /// Slack added around the initial guess when growing the region.
    pub region_margin: f64,
    pub params: CostParams,
    pub solver: SolverOptions,
}

impl Default for PredictorConfig {
    fn default() -> PredictorConfig {
        PredictorConfig {
            observation_frames: DEFAULT_OBSERVATION_FRAMES,
            prediction_points: DEFAULT_PREDICTION_POINTS,
            cell_size: 1.0,
            region_half_extent: 20.0,
            region_look_ahead: 15.0,
            region_margin: 10.0,
            params: CostParams::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PredictionWarning {
    /// The predicted trajectory crosses a stop line while it shows red.
    RedLightOffence,
    /// No feasible policy; the trajectory is the naive-fit baseline.
    NaiveFallback,
    /// The optimizer could not run; the trajectory is the initial guess.
    OptimizerAborted,
}

impl PredictionWarning {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionWarning::RedLightOffence => "red_light_offence",
            PredictionWarning::NaiveFallback => "naive_fallback",
            PredictionWarning::OptimizerAborted => "optimizer_aborted",
        }
    }
}

/// Wall-clock seconds spent in each pipeline stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    /// Window assembly + classifier forward pass + policy interpretation.
    pub inference_s: f64,
    /// Cost-field construction (grids, moving-obstacle alignment).
    pub rendering_s: f64,
    /// Levenberg–Marquardt refinement.
    pub optimization_s: f64,
}

impl StageTimings {
    pub fn total_s(&self) -> f64 {
        self.inference_s + self.rendering_s + self.optimization_s
    }
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub target_id: i64,
    /// Chosen maneuver; None when the naive fallback produced the output.
    pub policy: Option<PolicyLabel>,
    pub trajectory: DiscreteTrajectory,
    pub cost_breakdown: CostBreakdown,
    /// Objective at the initial guess (NaN when no objective was built).
    pub initial_cost: f64,
    /// Objective at the returned trajectory (NaN when no objective was built).
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: BTreeSet<PredictionWarning>,
    pub timings: StageTimings,
}

/// Moving-obstacle predictions carried across rounds, keyed by agent id.
#[derive(Debug, Clone, Default)]
pub struct PredictionState {
    previous: BTreeMap<i64, DiscreteTrajectory>,
}

impl PredictionState {
    pub fn new() -> PredictionState {
        PredictionState::default()
    }

    pub fn record(&mut self, id: i64, trajectory: DiscreteTrajectory) {
        self.previous.insert(id, trajectory);
    }

    pub fn previous(&self, id: i64) -> Option<&DiscreteTrajectory> {
        self.previous.get(&id)
    }

    pub fn len(&self) -> usize {
        self.previous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.previous.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("agent {id}: track does not cover the observation window [{t_from:.3}, {t_to:.3}]")]
    InsufficientHistory { id: i64, t_from: f64, t_to: f64 },
    #[error("agent {0} is not in the scenario")]
    UnknownAgent(i64),
    #[error("agent {0} is not a vehicle")]
    NotAVehicle(i64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("classifier: {0}")]
    Policy(#[from] PolicyError),
    #[error("fallback fit: {0}")]
    Baseline(#[from] BaselineError),
}

/// Poses of the target at the `frames` grid times ending at `t_now`.
pub fn observation_history(
    scenario: &Scenario,
    id: i64,
    t_now: f64,
    frames: usize,
) -> Result<Vec<PoseSample>, PredictError> {
    let h = scenario.frame_period;
    let t_from = t_now - (frames - 1) as f64 * h;
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = t_from + k as f64 * h;
        let pose = scenario
            .agent_pose_at(id, t)
            .map_err(|_| PredictError::InsufficientHistory { id, t_from, t_to: t_now })?;
        out.push(pose);
    }
    Ok(out)
}

/// Speed the history implies one second from now: a least-squares line
/// through the observed speeds, slope capped at ±a_max, clamped to ≥ 0.
fn speed_trend(history: &[PoseSample], a_max: f64) -> f64 {
    let t_now = history.last().unwrap().t;
    let n = history.len() as f64;
    let mean_t = history.iter().map(|s| s.t - t_now).sum::<f64>() / n;
    let mean_v = history.iter().map(|s| s.v).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in history {
        let dt = (s.t - t_now) - mean_t;
        num += dt * (s.v - mean_v);
        den += dt * dt;
    }
    let slope_fit = if den > 0.0 { num / den } else { 0.0 };
    let v_now = mean_v - slope_fit * mean_t;
    let slope = slope_fit.clamp(-a_max, a_max);
    (v_now + slope).max(0.0)
}

/// Resample a previous-round prediction onto the current round's time grid.
/// Between stored points it interpolates linearly; past the stored end it
/// extends with the final segment's velocity.
pub fn align_prediction(
    prev: &DiscreteTrajectory,
    t_now: f64,
    n: usize,
    h: f64,
) -> DiscreteTrajectory {
    let m = prev.len();
    let last = prev.point(m - 1);
    let last_v = (last - prev.point(m - 2)) * (1.0 / prev.h());
    let points = (0..n)
        .map(|i| {
            let t = t_now + i as f64 * h;
            let u = (t - prev.t0()) / prev.h();
            if u <= 0.0 {
                prev.point(0)
            } else if u >= (m - 1) as f64 {
                last + last_v * ((u - (m - 1) as f64) * prev.h())
            } else {
                let k = u.floor() as usize;
                let f = u - k as f64;
                prev.point(k) + (prev.point(k + 1) - prev.point(k)) * f
            }
        })
        .collect();
    DiscreteTrajectory::new(points, t_now, h)
}

/// Straight-line extension of a pose at its scripted velocity.
fn constant_velocity_from_pose(pose: &PoseSample, n: usize, h: f64) -> DiscreteTrajectory {
    let vel = Vec2::new(pose.theta.cos(), pose.theta.sin()) * pose.v;
    let points = (0..n).map(|i| pose.position() + vel * (i as f64 * h)).collect();
    DiscreteTrajectory::new(points, pose.t, h)
}

/// Predicted trajectories of every other agent present at `t_now`: the
/// previous round's prediction when one exists, otherwise constant
/// velocity from the scripted pose.
fn moving_obstacle_predictions(
    scenario: &Scenario,
    target_id: i64,
    t_now: f64,
    n: usize,
    h: f64,
    state: &PredictionState,
) -> Vec<(i64, DiscreteTrajectory)> {
    let mut out = Vec::new();
    for agent in &scenario.agents {
        if agent.id == target_id {
            continue;
        }
        let Ok(pose) = scenario.agent_pose_at(agent.id, t_now) else {
            continue; // not present this round
        };
        let traj = match state.previous(agent.id) {
            Some(prev) => align_prediction(prev, t_now, n, h),
            None => constant_velocity_from_pose(&pose, n, h),
        };
        out.push((agent.id, traj));
    }
    out
}

/// True when any trajectory segment crosses a stop line that shows red at
/// the time the segment is traversed.
pub fn crosses_red_stop_line(scenario: &Scenario, traj: &DiscreteTrajectory) -> bool {
    scenario.lights.iter().any(|light| {
        traj.points().windows(2).enumerate().any(|(i, w)| {
            segments_intersect(w[0], w[1], light.stop_line.0, light.stop_line.1)
                && light.state_at(traj.time(i)) == LightState::Red
        })
    })
}

/// Square region ahead of the pose, grown to cover every initial guess.
fn context_region(cfg: &PredictorConfig, pose: &PoseSample, inits: &[DiscreteTrajectory]) -> Rect {
    let ahead = Vec2::new(pose.theta.cos(), pose.theta.sin());
    let center = pose.position() + ahead * cfg.region_look_ahead;
    let half = Vec2::new(cfg.region_half_extent, cfg.region_half_extent);
    let base = Rect::new(center - half, center + half);
    let focus = Rect::from_points(
        inits
            .iter()
            .flat_map(|init| init.points().iter().copied())
            .chain([pose.position()]),
    )
    .expect("initial guesses are non-empty")
    .expand(cfg.region_margin);
    base.union(focus)
}

/// Predict one vehicle's trajectory over the configured horizon.
///
/// `state` supplies the previous round's predictions for the other agents;
/// the call never mutates it, so a round of predictions can be computed in
/// any order from one shared snapshot.
pub fn predict(
    scenario: &Scenario,
    model: &RecurrentClassifier,
    target_id: i64,
    t_now: f64,
    state: &PredictionState,
    cfg: &PredictorConfig,
) -> Result<PredictionResult, PredictError> {
    assert!(cfg.prediction_points >= 4, "need at least 4 prediction points");
    let agent = scenario.agent(target_id).ok_or(PredictError::UnknownAgent(target_id))?;
    if agent.kind != AgentKind::Vehicle {
        return Err(PredictError::NotAVehicle(target_id));
    }
    let h = scenario.frame_period;
    let n = cfg.prediction_points;

    // Stage 1: observe and classify.
    let t_stage = Instant::now();
    let history = observation_history(scenario, target_id, t_now, cfg.observation_frames)?;
    let window = ObservationWindow::from_track(&history);
    let dist = model.infer(&window)?;
    let pose = *history.last().unwrap();
    let v_trend = speed_trend(&history, cfg.params.a_max);
    let interpreted = interpret(&dist, scenario, &pose, v_trend, n, h, &cfg.params);
    let inference_s = t_stage.elapsed().as_secs_f64();

    let (policy, init, reference) = match interpreted {
        Ok(parts) => parts,
        Err(InterpreterError::AllInfeasible { .. }) => {
            let trajectory = naive_fit_baseline(&history, n, h, DEFAULT_ACCEL_REGULATOR)?;
            let mut warnings = BTreeSet::from([PredictionWarning::NaiveFallback]);
            if crosses_red_stop_line(scenario, &trajectory) {
                warnings.insert(PredictionWarning::RedLightOffence);
            }
            return Ok(PredictionResult {
                target_id,
                policy: None,
                trajectory,
                cost_breakdown: CostBreakdown::default(),
                initial_cost: f64::NAN,
                final_cost: f64::NAN,
                iterations: 0,
                converged: false,
                warnings,
                timings: StageTimings { inference_s, ..StageTimings::default() },
            });
        }
    };

    // Stage 2: build the cost context around the maneuver. Alongside the
    // interpreted guess, a hard-braking guess seeds the solver from the
    // other side of the keep-moving/stop decision; the context covers both.
    let t_stage = Instant::now();
    let desired_speed = if policy == PolicyLabel::Yield {
        0.0
    } else {
        reference.speed_limit.min(v_trend)
    };
    let mut candidates = vec![init];
    if pose.v > 0.1 {
        candidates.push(braking_guess(&reference, &pose, n, h, cfg.params.a_max));
    }
    let mo = moving_obstacle_predictions(scenario, target_id, t_now, n, h, state);
    let region = context_region(cfg, &pose, &candidates);
    let ctx =
        ContextSnapshot::build(scenario, region, cfg.cell_size, t_now, reference, desired_speed, mo)?;
    let rendering_s = t_stage.elapsed().as_secs_f64();

    // Stage 3: refine every candidate; keep the lowest final objective
    // (ties keep the earlier candidate, so the interpreted guess wins).
    let t_stage = Instant::now();
    let mut report = optimize(&candidates[0], &ctx, &cfg.params, &cfg.solver);
    for alt in &candidates[1..] {
        let r = optimize(alt, &ctx, &cfg.params, &cfg.solver);
        if r.final_cost < report.final_cost || !report.final_cost.is_finite() {
            report = r;
        }
    }
    let optimization_s = t_stage.elapsed().as_secs_f64();

    let cost_breakdown =
        total_cost(&ctx, &cfg.params, &report.trajectory).map(|(_, b)| b).unwrap_or_default();
    let mut warnings = BTreeSet::new();
    if report.abort_reason.is_some() {
        warnings.insert(PredictionWarning::OptimizerAborted);
    }
    if crosses_red_stop_line(scenario, &report.trajectory) {
        warnings.insert(PredictionWarning::RedLightOffence);
    }

    Ok(PredictionResult {
        target_id,
        policy: Some(policy),
        trajectory: report.trajectory,
        cost_breakdown,
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
        iterations: report.iterations,
        converged: report.converged,
        warnings,
        timings: StageTimings { inference_s, rendering_s, optimization_s },
    })
}

/// Predict every vehicle agent for one round. All predictions read the
/// same `state` snapshot (last round's results), so the outcome does not
/// depend on agent order; afterwards `state` holds this round's
/// trajectories for every agent that produced one.
pub fn predict_all(
    scenario: &Scenario,
    model: &RecurrentClassifier,
    t_now: f64,
    state: &mut PredictionState,
    cfg: &PredictorConfig,
) -> BTreeMap<i64, Result<PredictionResult, PredictError>> {
    let snapshot = state.clone();
    let mut out = BTreeMap::new();
    for agent in &scenario.agents {
        if agent.kind != AgentKind::Vehicle {
            continue;
        }
        out.insert(agent.id, predict(scenario, model, agent.id, t_now, &snapshot, cfg));
    }
    for (id, result) in &out {
        if let Ok(res) = result {
            state.record(*id, res.trajectory.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    fn model() -> RecurrentClassifier {
        RecurrentClassifier::untrained(DEFAULT_OBSERVATION_FRAMES, 16, 7)
    }

    #[test]
    fn too_early_a_frame_is_an_insufficient_history_error() {
        let scenario = fixtures::case("straight_lane").unwrap();
        let err = predict(
            &scenario,
            &model(),
            0,
            1.0, // window would start at t = -2.9
            &PredictionState::new(),
            &PredictorConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PredictError::InsufficientHistory { id: 0, .. }), "{err:?}");
    }

    #[test]
    fn unknown_and_non_vehicle_targets_are_errors() {
        let scenario = fixtures::case("pedestrian_braking").unwrap();
        let cfg = PredictorConfig::default();
        let state = PredictionState::new();
        assert!(matches!(
            predict(&scenario, &model(), 99, 5.0, &state, &cfg),
            Err(PredictError::UnknownAgent(99))
        ));
        assert!(matches!(
            predict(&scenario, &model(), 7, 5.0, &state, &cfg),
            Err(PredictError::NotAVehicle(7))
        ));
    }

    #[test]
    fn straight_lane_prediction_is_well_formed_and_deterministic() {
        let scenario = fixtures::case("straight_lane").unwrap();
        let cfg = PredictorConfig::default();
        let m = model();
        let state = PredictionState::new();
        let res = predict(&scenario, &m, 0, 6.0, &state, &cfg).unwrap();

        assert_eq!(res.target_id, 0);
        assert!(res.policy.is_some());
        assert!(!res.warnings.contains(&PredictionWarning::NaiveFallback));
        assert_eq!(res.trajectory.len(), cfg.prediction_points);
        assert_relative_eq!(res.trajectory.t0(), 6.0);
        assert_relative_eq!(res.trajectory.h(), 0.1);
        // anchor = projection of the pose onto the lane centerline
        let pose = scenario.agent_pose_at(0, 6.0).unwrap();
        assert!((res.trajectory.point(0) - pose.position()).norm() < 0.5);
        assert!(res.final_cost.is_finite());
        assert!(res.final_cost <= res.initial_cost * (1.0 + 1e-12));
        assert!(res.timings.inference_s >= 0.0);
        assert!(res.timings.rendering_s > 0.0);
        assert!(res.timings.optimization_s > 0.0);

        // bit-identical on a second run
        let again = predict(&scenario, &m, 0, 6.0, &state, &cfg).unwrap();
        for i in 0..res.trajectory.len() {
            assert_eq!(res.trajectory.point(i), again.trajectory.point(i));
        }
    }

    #[test]
    fn off_road_pose_falls_back_to_the_naive_fit() {
        let mut scenario = fixtures::case("straight_lane").unwrap();
        for s in &mut scenario.agents[0].track {
            s.y += 500.0; // far from every lane: no policy is feasible
        }
        let res =
            predict(&scenario, &model(), 0, 6.0, &PredictionState::new(), &PredictorConfig::default())
                .unwrap();
        assert!(res.warnings.contains(&PredictionWarning::NaiveFallback));
        assert_eq!(res.policy, None);
        assert!(!res.converged);
        assert_eq!(res.iterations, 0);
        // straight history at 8 m/s extends straight
        let p0 = res.trajectory.point(0);
        let p_end = res.trajectory.point(res.trajectory.len() - 1);
        assert_relative_eq!(p_end.y, p0.y, epsilon = 1e-6);
        assert_relative_eq!(p_end.x - p0.x, 8.0 * 3.9, epsilon = 1e-3);
    }

    #[test]
    fn offence_case_raises_the_red_light_warning() {
        let scenario = fixtures::case("red_light_offence").unwrap();
        let frame = fixtures::designated_frame("red_light_offence").unwrap();
        let t_now = frame as f64 * scenario.frame_period;
        let res = predict(
            &scenario,
            &model(),
            0,
            t_now,
            &PredictionState::new(),
            &PredictorConfig::default(),
        )
        .unwrap();
        assert!(
            res.warnings.contains(&PredictionWarning::RedLightOffence),
            "warnings: {:?}, policy {:?}, converged {}",
            res.warnings,
            res.policy,
            res.converged
        );
    }

    #[test]
    fn compliant_case_raises_no_offence_warning() {
        let scenario = fixtures::case("red_light_construction").unwrap();
        let frame = fixtures::designated_frame("red_light_construction").unwrap();
        let t_now = frame as f64 * scenario.frame_period;
        let res = predict(
            &scenario,
            &model(),
            0,
            t_now,
            &PredictionState::new(),
            &PredictorConfig::default(),
        )
        .unwrap();
        assert!(!res.warnings.contains(&PredictionWarning::RedLightOffence));
    }

    #[test]
    fn align_prediction_shifts_onto_the_new_time_grid() {
        // stored line: points (i, 0) from t0 = 5.0 at h = 0.1
        let stored = DiscreteTrajectory::new(
            (0..10).map(|i| Vec2::new(i as f64, 0.0)).collect(),
            5.0,
            0.1,
        );
        let aligned = align_prediction(&stored, 5.3, 12, 0.1);
        assert_eq!(aligned.len(), 12);
        assert_relative_eq!(aligned.t0(), 5.3);
        for i in 0..12 {
            // index i sits at stored index i + 3; past the end the last
            // velocity (1 unit per step) carries on, so x = 3 + i either way
            assert_relative_eq!(aligned.point(i).x, (3 + i) as f64, epsilon = 1e-9);
            assert_relative_eq!(aligned.point(i).y, 0.0);
        }
        // half-step offset interpolates midpoints
        let half = align_prediction(&stored, 5.25, 4, 0.1);
        assert_relative_eq!(half.point(0).x, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn predict_all_covers_vehicles_only_and_updates_state() {
        let scenario = fixtures::case("pedestrian_braking").unwrap();
        let cfg = PredictorConfig::default();
        let m = model();
        let mut state = PredictionState::new();
        let round = predict_all(&scenario, &m, 4.5, &mut state, &cfg);
        assert_eq!(round.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert!(round[&0].is_ok());
        assert!(state.previous(0).is_some());
        assert!(state.previous(7).is_none());

        // a second round consumes the stored prediction without issue
        let round2 = predict_all(&scenario, &m, 4.6, &mut state, &cfg);
        assert!(round2[&0].is_ok());
    }

    #[test]
    fn round_results_do_not_depend_on_agent_order() {
        let scenario = fixtures::case("intersection_construction").unwrap();
        let mut reversed = scenario.clone();
        reversed.agents.reverse();
        let cfg = PredictorConfig::default();
        let m = model();

        let mut seed_state = PredictionState::new();
        seed_state.record(
            0,
            DiscreteTrajectory::new(
                (0..cfg.prediction_points).map(|i| Vec2::new(-15.0 + 0.6 * i as f64, 0.0)).collect(),
                4.3,
                0.1,
            ),
        );

        let mut state_a = seed_state.clone();
        let mut state_b = seed_state.clone();
        let round_a = predict_all(&scenario, &m, 4.4, &mut state_a, &cfg);
        let round_b = predict_all(&reversed, &m, 4.4, &mut state_b, &cfg);

        assert_eq!(round_a.len(), 2);
        assert_eq!(round_a.len(), round_b.len());
        for (id, res_a) in &round_a {
            let (Ok(a), Ok(b)) = (res_a, &round_b[id]) else {
                panic!("round entries disagree for agent {id}");
            };
            assert_eq!(a.trajectory.len(), b.trajectory.len());
            for i in 0..a.trajectory.len() {
                assert_eq!(a.trajectory.point(i), b.trajectory.point(i), "agent {id} point {i}");
            }
        }
    }

    #[test]
    fn speed_trend_extrapolates_and_clamps() {
        let steady: Vec<PoseSample> = (0..40)
            .map(|i| PoseSample { t: i as f64 * 0.1, x: 0.0, y: 0.0, theta: 0.0, v: 8.0 })
            .collect();
        assert_relative_eq!(speed_trend(&steady, 4.0), 8.0, epsilon = 1e-9);

        let braking: Vec<PoseSample> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                PoseSample { t, x: 0.0, y: 0.0, theta: 0.0, v: 8.0 - 2.0 * t }
            })
            .collect();
        // v(t_now) = 0.2, slope −2 → one second ahead would be negative
        assert_relative_eq!(speed_trend(&braking, 4.0), 0.0);

        let hard: Vec<PoseSample> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                PoseSample { t, x: 0.0, y: 0.0, theta: 0.0, v: 40.0 - 6.0 * t }
            })
            .collect();
        // slope −6 caps at −4: 16.6 − 4 = 12.6
        assert_relative_eq!(speed_trend(&hard, 4.0), 16.6 - 4.0, epsilon = 1e-9);
    }
}
