//! Deterministic scripted-world engine: kinematic-bicycle rollouts that
//! exhibit each maneuver label (the training-data source), and frame-by-
//! frame replay of scenario scripts (the observation source).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::wrap_angle;
use crate::policy::{label_window, ObservationWindow, PolicyLabel, TrainingExample};
use crate::scenario::{AgentKind, AgentScript, PoseSample, Scenario, ScenarioError};

/// Bicycle-model wheelbase, meters.
pub const WHEELBASE: f64 = 2.7;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible maneuver: {0}")]
    InfeasibleManeuver(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Controls for one generated track. The maneuver itself begins `lead_in`
/// seconds into the track so that observation windows ending at the
/// maneuver onset see the approach.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverParams {
    pub frame_period: f64,
    pub frames: usize,
    /// Seconds of cruise before the maneuver begins.
    pub lead_in: f64,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Turn radius for turn maneuvers, meters.
    pub turn_radius: f64,
    /// Lateral displacement of a lane change, meters.
    pub lane_width: f64,
    /// Duration of the lane-change S-curve, seconds.
    pub lane_change_duration: f64,
    /// Deceleration of a yield maneuver, m/s² (positive).
    pub yield_decel: f64,
    /// Noise scale; 0 disables perturbations.
    pub noise: f64,
    /// Curvature bound the rollout must respect, 1/m.
    pub kappa_max: f64,
    /// Acceleration bound the rollout must respect, m/s².
    pub a_max: f64,
}

impl Default for ManeuverParams {
    fn default() -> ManeuverParams {
        ManeuverParams {
            frame_period: 0.1,
            frames: 160,
            lead_in: 5.0,
            speed: 8.0,
            turn_radius: 12.0,
            lane_width: 3.5,
            lane_change_duration: 3.0,
            yield_decel: 2.0,
            noise: 1.0,
            kappa_max: 0.2,
            a_max: 4.0,
        }
    }
}

impl ManeuverParams {
    /// Frame index where the maneuver begins.
    pub fn maneuver_frame(&self) -> usize {
        (self.lead_in / self.frame_period).round() as usize
    }

    /// How long the active part of the maneuver lasts, in seconds.
    /// Forward has no active part and reports zero.
    pub fn maneuver_duration(&self, kind: PolicyLabel) -> f64 {
        match kind {
            PolicyLabel::Forward => 0.0,
            PolicyLabel::Yield => self.speed / self.yield_decel,
            PolicyLabel::TurnLeft | PolicyLabel::TurnRight => {
                std::f64::consts::FRAC_PI_2 * self.turn_radius / self.turn_speed()
            }
            PolicyLabel::LaneChangeLeft | PolicyLabel::LaneChangeRight => {
                self.lane_change_duration
            }
        }
    }

    /// Frame index at the middle of the maneuver's active part; the
    /// natural labeling anchor for a generated track.
    pub fn maneuver_center_frame(&self, kind: PolicyLabel) -> usize {
        ((self.lead_in + 0.5 * self.maneuver_duration(kind)) / self.frame_period).round()
            as usize
    }

    /// Turn speed keeping centripetal acceleration within 70% of the
    /// bound.
    fn turn_speed(&self) -> f64 {
        self.speed.min((0.7 * self.a_max * self.turn_radius).sqrt())
    }
}

/// One segment of the control schedule.
#[derive(Debug, Clone, Copy)]
struct Phase {
    /// End time of the phase, seconds from track start.
    until: f64,
    v_target: f64,
    /// Base curvature command (signed), 1/m.
    kappa: f64,
    /// Longitudinal acceleration cap for speed tracking, m/s².
    a_cap: f64,
}

fn schedule(kind: PolicyLabel, p: &ManeuverParams) -> Result<Vec<Phase>, SimError> {
    let total = p.frames as f64 * p.frame_period;
    let cruise = Phase { until: total, v_target: p.speed, kappa: 0.0, a_cap: 1.5 };
    let start = p.lead_in;
    match kind {
        PolicyLabel::Forward => Ok(vec![cruise]),
        PolicyLabel::Yield => {
            if p.yield_decel > 0.9 * p.a_max {
                return Err(SimError::InfeasibleManeuver(format!(
                    "yield deceleration {} exceeds 90% of the acceleration bound {}",
                    p.yield_decel, p.a_max
                )));
            }
            Ok(vec![
                Phase { until: start, ..cruise },
                Phase { until: total, v_target: 0.0, kappa: 0.0, a_cap: p.yield_decel },
            ])
        }
        PolicyLabel::TurnLeft | PolicyLabel::TurnRight => {
            let kappa_turn = 1.0 / p.turn_radius;
            if kappa_turn > 0.9 * p.kappa_max {
                return Err(SimError::InfeasibleManeuver(format!(
                    "turn radius {} m requires curvature beyond 90% of the bound {}",
                    p.turn_radius, p.kappa_max
                )));
            }
            let sign = if kind == PolicyLabel::TurnLeft { 1.0 } else { -1.0 };
            let v_turn = p.turn_speed();
            // slow down ahead of the turn so the maneuver starts at v_turn
            let slow_time = ((p.speed - v_turn) / 2.0).max(0.0);
            let arc_time = (std::f64::consts::FRAC_PI_2 * p.turn_radius) / v_turn;
            Ok(vec![
                Phase { until: start - slow_time, ..cruise },
                Phase { until: start, v_target: v_turn, kappa: 0.0, a_cap: 2.5 },
                Phase {
                    until: start + arc_time,
                    v_target: v_turn,
                    kappa: sign * kappa_turn,
                    a_cap: 1.0,
                },
                Phase { until: total, v_target: v_turn, kappa: 0.0, a_cap: 1.0 },
            ])
        }
        PolicyLabel::LaneChangeLeft | PolicyLabel::LaneChangeRight => {
            // sinusoidal curvature pulse producing an S-curve with net
            // lateral displacement ≈ lane_width and zero net heading:
            // κ(t) = κ_peak·sin(2πu), lateral ≈ v²·κ_peak·T²/(2π)
            let t_lc = p.lane_change_duration;
            let kappa_peak =
                2.0 * std::f64::consts::PI * p.lane_width / (p.speed * p.speed * t_lc * t_lc);
            if kappa_peak > 0.9 * p.kappa_max {
                return Err(SimError::InfeasibleManeuver(format!(
                    "lane change needs peak curvature {kappa_peak:.3} beyond 90% of the bound"
                )));
            }
            if p.speed * p.speed * kappa_peak > 0.9 * p.a_max {
                return Err(SimError::InfeasibleManeuver(format!(
                    "lane change at {} m/s needs lateral acceleration {:.2} beyond 90% of the bound",
                    p.speed,
                    p.speed * p.speed * kappa_peak
                )));
            }
            let sign = if kind == PolicyLabel::LaneChangeLeft { 1.0 } else { -1.0 };
            // represent the pulse with many short constant-κ phases
            let steps = 30;
            let mut phases = vec![Phase { until: start, ..cruise }];
            for k in 0..steps {
                let u = (k as f64 + 0.5) / steps as f64;
                phases.push(Phase {
                    until: start + t_lc * (k as f64 + 1.0) / steps as f64,
                    v_target: p.speed,
                    kappa: sign * kappa_peak * (2.0 * std::f64::consts::PI * u).sin(),
                    a_cap: 1.0,
                });
            }
            phases.push(Phase { until: total, ..cruise });
            Ok(phases)
        }
    }
}

/// Roll out a kinematic bicycle following the maneuver's control schedule,
/// with seeded bounded noise on steering rate and acceleration. The track
/// starts at the origin heading +x.
pub fn generate_maneuver_track(
    kind: PolicyLabel,
    params: &ManeuverParams,
    seed: u64,
) -> Result<AgentScript, SimError> {
    let phases = schedule(kind, params)?;
    let h = params.frame_period;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let delta_cap = (0.95 * params.kappa_max * WHEELBASE).atan();
    const STEER_RATE_MAX: f64 = 0.8; // rad/s
    const KP_SPEED: f64 = 1.5;

    let (mut x, mut y, mut theta, mut v) = (0.0, 0.0, 0.0f64, params.speed);
    let mut delta: f64 = 0.0;
    let mut track = Vec::with_capacity(params.frames);
    for i in 0..params.frames {
        let t = i as f64 * h;
        let phase = phases
            .iter()
            .find(|p| t < p.until)
            .or_else(|| phases.last())
            .expect("schedule has phases");

        track.push(PoseSample { t, x, y, theta: wrap_angle(theta), v });

        // steering follows the phase curvature with bounded slew plus
        // bounded rate noise
        let delta_target = (phase.kappa * WHEELBASE).atan();
        let rate = ((delta_target - delta) / h).clamp(-STEER_RATE_MAX, STEER_RATE_MAX)
            + params.noise * rng.gen_range(-0.15..0.15);
        delta = (delta + rate * h).clamp(-delta_cap, delta_cap);

        // speed tracking with the phase's acceleration cap plus bounded
        // noise, both limited so the combined acceleration stays inside
        // the bound
        let mut a = (KP_SPEED * (phase.v_target - v)).clamp(-phase.a_cap, phase.a_cap)
            + params.noise * rng.gen_range(-0.25..0.25);
        let lateral = v * v * delta.tan().abs() / WHEELBASE;
        let budget = (0.95 * params.a_max).powi(2) - lateral * lateral;
        let cap = if budget > 0.0 { budget.sqrt() } else { 0.0 };
        a = a.clamp(-cap.max(0.0), cap.max(0.0));

        x += v * theta.cos() * h;
        y += v * theta.sin() * h;
        theta += v * delta.tan() / WHEELBASE * h;
        v = (v + a * h).max(0.0);
    }

    Ok(AgentScript { id: 0, kind: AgentKind::Vehicle, track })
}

/// Deterministic per-label maneuver variations for the bundled pack.
pub fn pack_params(label: PolicyLabel, k: usize, t_obs: usize, t_pred: usize) -> ManeuverParams {
    let mut p = ManeuverParams::default();
    p.frames = t_obs + t_pred + 80;
    p.speed = [6.0, 7.0, 8.0, 9.0][k % 4];
    p.lead_in = 4.5 + 0.1 * ((k / 4) % 4) as f64;
    match label {
        PolicyLabel::TurnLeft | PolicyLabel::TurnRight => {
            p.turn_radius = [10.0, 12.0, 15.0][k % 3];
        }
        PolicyLabel::LaneChangeLeft | PolicyLabel::LaneChangeRight => {
            p.lane_change_duration = [2.5, 3.0, 3.5][k % 3];
        }
        PolicyLabel::Yield => {
            p.yield_decel = [1.5, 2.0, 2.5][k % 3];
        }
        PolicyLabel::Forward => {}
    }
    p
}

/// Labeled windows from seeded maneuver rollouts: per track, five windows
/// ending 0.4 s to 2.8 s after the maneuver onset, so every observation
/// contains part of the maneuver while the label stays inside its stable
/// zone. Windows are labeled by what the track actually does
/// ([`label_window`]), not by the generating intent.
pub fn maneuver_pack(
    t_obs: usize,
    t_pred: usize,
    per_label: usize,
    seed: u64,
    group_base: u64,
) -> Result<Vec<TrainingExample>, SimError> {
    let mut out = Vec::new();
    let mut group = group_base;
    for (li, &label) in PolicyLabel::ALL.iter().enumerate() {
        for k in 0..per_label {
            let p = pack_params(label, k, t_obs, t_pred);
            let track_seed = seed ^ (((li as u64) << 32) | k as u64);
            let script = generate_maneuver_track(label, &p, track_seed).map_err(|e| {
                SimError::InfeasibleManeuver(format!("pack ({:?}, k={k}): {e}", label))
            })?;
            let onset = p.maneuver_frame() as i64;
            for off in [4i64, 10, 16, 22, 28] {
                let i = (onset + off) as usize;
                if let Ok(observed_label) = label_window(&script.track, i, t_obs, t_pred) {
                    out.push(TrainingExample {
                        window: ObservationWindow::from_track(&script.track[i + 1 - t_obs..=i]),
                        label: observed_label,
                        group,
                    });
                }
            }
            group += 1;
        }
    }
    Ok(out)
}

/// Poses of every agent at each frame of `[from_t, to_t]`, sampled at the
/// scenario frame period. Pure function of the scenario.
pub fn replay(
    scenario: &Scenario,
    from_t: f64,
    to_t: f64,
) -> Result<Vec<Vec<(i64, PoseSample)>>, ScenarioError> {
    let h = scenario.frame_period;
    let count = ((to_t - from_t) / h + 1e-9).floor() as usize + 1;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let t = from_t + k as f64 * h;
        let mut frame = Vec::with_capacity(scenario.agents.len());
        for agent in &scenario.agents {
            frame.push((agent.id, scenario.agent_pose_at(agent.id, t)?));
        }
        frames.push(frame);
    }
    Ok(frames)
}
