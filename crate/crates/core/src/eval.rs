//! Case-study evaluation: replay a scripted scenario frame by frame,
//! predict with the full pipeline and two extrapolation baselines, and
//! score every method against the scripted future.

use std::fmt::Write as _;

use thiserror::Error;

use crate::baselines::{
    constant_velocity_baseline, naive_fit_baseline, BaselineError, DEFAULT_ACCEL_REGULATOR,
};
use crate::geometry::Vec2;
use crate::policy::{PolicyLabel, RecurrentClassifier};
use crate::predictor::{
    observation_history, predict_all, PredictError, PredictionState, PredictionWarning,
    PredictorConfig,
};
use crate::scenario::Scenario;
use crate::trajectory::DiscreteTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ours,
    NaiveFit,
    ConstantVelocity,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ours, Method::NaiveFit, Method::ConstantVelocity];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::NaiveFit => "naive_fit",
            Method::ConstantVelocity => "constant_velocity",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Method::Ours => 0,
            Method::NaiveFit => 1,
            Method::ConstantVelocity => 2,
        }
    }
}

/// Per-index Euclidean errors between a prediction and the true positions
/// at the same sampling times.
pub fn rmse_per_index(pred: &DiscreteTrajectory, truth: &[Vec2]) -> Vec<f64> {
    assert_eq!(pred.len(), truth.len(), "truth must cover the prediction horizon");
    (0..pred.len()).map(|i| (pred.point(i) - truth[i]).norm()).collect()
}

/// Mean and variance of the prediction error per look-ahead index,
/// accumulated over frames. Index 0 is the anchored present and excluded;
/// reportable indices span 1..N.
#[derive(Debug, Clone)]
pub struct ErrorCurve {
    n: usize,
    h: f64,
    frames: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl ErrorCurve {
    pub fn new(n: usize, h: f64) -> ErrorCurve {
        assert!(n >= 2);
        ErrorCurve { n, h, frames: 0, sum: vec![0.0; n], sum_sq: vec![0.0; n] }
    }

    pub fn add(&mut self, errors: &[f64]) {
        assert_eq!(errors.len(), self.n);
        for (i, &e) in errors.iter().enumerate() {
            self.sum[i] += e;
            self.sum_sq[i] += e * e;
        }
        self.frames += 1;
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn look_ahead_s(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn mean(&self, i: usize) -> f64 {
        assert!((1..self.n).contains(&i), "look-ahead index out of range");
        self.sum[i] / self.frames.max(1) as f64
    }

    /// Population variance; clamped at zero against rounding.
    pub fn variance(&self, i: usize) -> f64 {
        assert!((1..self.n).contains(&i), "look-ahead index out of range");
        let m = self.mean(i);
        (self.sum_sq[i] / self.frames.max(1) as f64 - m * m).max(0.0)
    }
}

/// Scores of one evaluation frame, per method.
#[derive(Debug, Clone)]
pub struct FrameScore {
    pub frame: usize,
    pub t: f64,
    /// Mean error over look-ahead indices 1..N.
    pub instantaneous: [f64; 3],
    /// Error at the last look-ahead index.
    pub end_error: [f64; 3],
    /// Speed over the final predicted segment.
    pub terminal_speed: [f64; 3],
    pub policy: Option<PolicyLabel>,
    pub converged: bool,
    pub warnings: Vec<PredictionWarning>,
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub case: String,
    pub n: usize,
    pub h: f64,
    pub curves: [ErrorCurve; 3],
    pub frames: Vec<FrameScore>,
    pub events: Vec<String>,
}

const CURVE_HEADER: &str = "look_ahead_s,mean_rmse,var_rmse,method\n";

impl CaseReport {
    /// RMSE-vs-look-ahead curve of one method.
    pub fn curve_csv(&self, method: Method) -> String {
        let mut out = String::from(CURVE_HEADER);
        self.push_curve_rows(&mut out, method);
        out
    }

    /// All methods' curves in one table.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        for method in Method::ALL {
            self.push_curve_rows(&mut out, method);
        }
        out
    }

    fn push_curve_rows(&self, out: &mut String, method: Method) {
        let curve = &self.curves[method.index()];
        for i in 1..self.n {
            writeln!(
                out,
                "{:.3},{:.6},{:.6},{}",
                curve.look_ahead_s(i),
                curve.mean(i),
                curve.variance(i),
                method.name()
            )
            .unwrap();
        }
    }

    /// Per-frame instantaneous and end errors, one row per frame × method.
    pub fn frames_csv(&self) -> String {
        let mut out = String::from(
            "frame,t,method,instantaneous_rmse,end_rmse,terminal_speed,policy,converged,warnings\n",
        );
        for fs in &self.frames {
            for method in Method::ALL {
                let k = method.index();
                let (policy, converged, warnings) = if method == Method::Ours {
                    (
                        fs.policy.map(|p| p.name()).unwrap_or("none").to_string(),
                        fs.converged.to_string(),
                        fs.warnings.iter().map(|w| w.as_str()).collect::<Vec<_>>().join("+"),
                    )
                } else {
                    (String::new(), String::new(), String::new())
                };
                writeln!(
                    out,
                    "{},{:.3},{},{:.6},{:.6},{:.6},{},{},{}",
                    fs.frame,
                    fs.t,
                    method.name(),
                    fs.instantaneous[k],
                    fs.end_error[k],
                    fs.terminal_speed[k],
                    policy,
                    converged,
                    warnings
                )
                .unwrap();
            }
        }
        out
    }

    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for line in &self.events {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("player prediction failed at frame {frame}: {source}")]
    Predict {
        frame: usize,
        #[source]
        source: PredictError,
    },
    #[error("baseline failed at frame {frame}: {source}")]
    Baseline {
        frame: usize,
        #[source]
        source: BaselineError,
    },
    #[error("no frame has both a full observation window and a full future in the script")]
    NoEvaluableFrames,
}

/// Frame indices (multiples of the frame period) where the player track
/// covers both the observation window and the full prediction horizon.
pub fn evaluation_frames(scenario: &Scenario, t_obs: usize, n: usize) -> Vec<usize> {
    let h = scenario.frame_period;
    let (t_start, t_end) = scenario.player().time_span();
    let first = ((t_start + (t_obs - 1) as f64 * h) / h - 1e-9).ceil() as usize;
    let last = ((t_end - (n - 1) as f64 * h) / h + 1e-9).floor() as isize;
    if (last as f64) < first as f64 {
        return vec![];
    }
    (first..=last as usize)
        .filter(|&f| {
            let t = f as f64 * h;
            t - (t_obs - 1) as f64 * h >= t_start - 1e-9 && t + (n - 1) as f64 * h <= t_end + 1e-9
        })
        .collect()
}

fn terminal_speed(traj: &DiscreteTrajectory) -> f64 {
    let m = traj.len();
    (traj.point(m - 1) - traj.point(m - 2)).norm() / traj.h()
}

fn mean_tail(errors: &[f64]) -> f64 {
    errors[1..].iter().sum::<f64>() / (errors.len() - 1) as f64
}

/// Replay the scenario and score {ours, naive_fit, constant_velocity} on
/// every evaluated frame (every `stride`-th candidate). The pipeline's
/// moving-obstacle state carries across frames, so evaluation is
/// sequential by construction.
pub fn run_case(
    case_name: &str,
    scenario: &Scenario,
    model: &RecurrentClassifier,
    cfg: &PredictorConfig,
    stride: usize,
) -> Result<CaseReport, EvalError> {
    assert!(stride >= 1);
    let h = scenario.frame_period;
    let n = cfg.prediction_points;
    let player = scenario.player_id;
    let candidates = evaluation_frames(scenario, cfg.observation_frames, n);
    if candidates.is_empty() {
        return Err(EvalError::NoEvaluableFrames);
    }

    let mut curves =
        [ErrorCurve::new(n, h), ErrorCurve::new(n, h), ErrorCurve::new(n, h)];
    let mut frames = Vec::new();
    let mut events = Vec::new();
    let mut state = PredictionState::new();

    for &frame in candidates.iter().step_by(stride) {
        let t = frame as f64 * h;
        let mut round = predict_all(scenario, model, t, &mut state, cfg);
        let ours = round
            .remove(&player)
            .expect("player is a vehicle")
            .map_err(|source| EvalError::Predict { frame, source })?;

        let history = observation_history(scenario, player, t, cfg.observation_frames)
            .map_err(|source| EvalError::Predict { frame, source })?;
        let naive = naive_fit_baseline(&history, n, h, DEFAULT_ACCEL_REGULATOR)
            .map_err(|source| EvalError::Baseline { frame, source })?;
        let cv = constant_velocity_baseline(&history, n, h)
            .map_err(|source| EvalError::Baseline { frame, source })?;

        let truth: Vec<Vec2> = (0..n)
            .map(|i| {
                let pose = scenario
                    .agent_pose_at(player, t + i as f64 * h)
                    .expect("frame selection guarantees future coverage");
                pose.position()
            })
            .collect();

        let preds = [&ours.trajectory, &naive, &cv];
        let mut instantaneous = [0.0; 3];
        let mut end_error = [0.0; 3];
        let mut speeds = [0.0; 3];
        for method in Method::ALL {
            let k = method.index();
            let errors = rmse_per_index(preds[k], &truth);
            curves[k].add(&errors);
            instantaneous[k] = mean_tail(&errors);
            end_error[k] = errors[n - 1];
            speeds[k] = terminal_speed(preds[k]);
        }

        for w in &ours.warnings {
            events.push(format!(
                "frame={frame} t={t:.3} agent={player} event={}",
                w.as_str()
            ));
        }
        if !ours.converged && ours.policy.is_some() {
            events.push(format!("frame={frame} t={t:.3} agent={player} event=not_converged"));
        }

        frames.push(FrameScore {
            frame,
            t,
            instantaneous,
            end_error,
            terminal_speed: speeds,
            policy: ours.policy,
            converged: ours.converged,
            warnings: ours.warnings.iter().copied().collect(),
        });
    }

    Ok(CaseReport { case: case_name.to_string(), n, h, curves, frames, events })
}
