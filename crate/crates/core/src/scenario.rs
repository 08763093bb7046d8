//! Driving-context data model and the scenario file format.
//!
//! A scenario is a single UTF-8 JSON document holding the lane graph,
//! static obstacles, traffic lights, speed limits and the scripted motion
//! of every agent. Scenario values are immutable after loading and act as
//! the ground-truth source for both simulation and evaluation.

use crate::geometry::{slerp_angle, wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unknown agent id {0}")]
    UnknownAgent(i64),
    #[error("t={t} outside track span [{start}, {end}] of agent {id}")]
    TimeOutOfRange { id: i64, t: f64, start: f64, end: f64 },
}

/// One timestamped observation of one vehicle: global position, heading
/// in (-pi, pi] and non-negative body speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl PoseSample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Solid,
    Broken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: i64,
    pub centerline: Vec<Vec2>,
    pub width: f64,
    pub left_boundary: BoundaryKind,
    pub right_boundary: BoundaryKind,
    pub speed_limit: f64,
    pub successors: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticObstacle {
    pub polygon: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightState {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLight {
    pub stop_line: (Vec2, Vec2),
    /// Unit vector pointing the way approaching traffic travels.
    pub approach: Vec2,
    /// Time-ordered (start_t, state); each state holds until the next entry.
    pub schedule: Vec<(f64, LightState)>,
}

impl TrafficLight {
    /// State at time t. Before the first schedule entry the light counts
    /// as green (inactive).
    pub fn state_at(&self, t: f64) -> LightState {
        let mut state = LightState::Green;
        for &(start, s) in &self.schedule {
            if start <= t {
                state = s;
            } else {
                break;
            }
        }
        state
    }

    pub fn red_during(&self, t_start: f64, t_end: f64) -> bool {
        if self.state_at(t_start) == LightState::Red {
            return true;
        }
        self.schedule
            .iter()
            .any(|&(start, s)| s == LightState::Red && start >= t_start && start <= t_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
}

/// A scripted agent: its whole motion is given as a time-ordered track.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentScript {
    pub id: i64,
    pub kind: AgentKind,
    pub track: Vec<PoseSample>,
}

impl AgentScript {
    pub fn time_span(&self) -> (f64, f64) {
        (self.track.first().unwrap().t, self.track.last().unwrap().t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frame_period: f64,
    pub player_id: i64,
    pub lanes: Vec<Lane>,
    pub obstacles: Vec<StaticObstacle>,
    pub lights: Vec<TrafficLight>,
    pub agents: Vec<AgentScript>,
}

impl Scenario {
    pub fn agent(&self, id: i64) -> Option<&AgentScript> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn lane(&self, id: i64) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn player(&self) -> &AgentScript {
        self.agent(self.player_id).expect("player id validated on load")
    }

    /// Pose of an agent at an arbitrary time inside its track span.
    /// Position and speed interpolate linearly between the bracketing
    /// samples; heading interpolates along the shortest arc. Stored
    /// sample times return the stored sample exactly.
    pub fn agent_pose_at(&self, id: i64, t: f64) -> Result<PoseSample, ScenarioError> {
        let agent = self.agent(id).ok_or(ScenarioError::UnknownAgent(id))?;
        let (start, end) = agent.time_span();
        // tolerate float-grid round-off at the span boundaries
        const EDGE_TOL: f64 = 1e-6;
        if t < start - EDGE_TOL || t > end + EDGE_TOL {
            return Err(ScenarioError::TimeOutOfRange { id, t, start, end });
        }
        let t = t.clamp(start, end);
        let track = &agent.track;
        // index of the first sample with sample.t >= t
        let hi = track.partition_point(|s| s.t < t);
        if hi == 0 {
            return Ok(track[0]);
        }
        let b = track[hi.min(track.len() - 1)];
        if b.t == t {
            return Ok(b);
        }
        let a = track[hi - 1];
        let u = (t - a.t) / (b.t - a.t);
        Ok(PoseSample {
            t,
            x: a.x + (b.x - a.x) * u,
            y: a.y + (b.y - a.y) * u,
            theta: slerp_angle(a.theta, b.theta, u),
            v: a.v + (b.v - a.v) * u,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |msg: String| Err(ScenarioError::Invariant(msg));
        if !(self.frame_period > 0.0) {
            return inv(format!("frame_period must be > 0, got {}", self.frame_period));
        }
        let players = self.agents.iter().filter(|a| a.id == self.player_id).count();
        if players != 1 {
            return inv(format!(
                "player_id {} must refer to exactly one agent, found {}",
                self.player_id, players
            ));
        }
        let mut lane_ids = Vec::new();
        for lane in &self.lanes {
            if lane_ids.contains(&lane.id) {
                return inv(format!("duplicate lane id {}", lane.id));
            }
            lane_ids.push(lane.id);
            if lane.centerline.len() < 2 {
                return inv(format!(
                    "lane {} centerline needs >= 2 points, got {}",
                    lane.id,
                    lane.centerline.len()
                ));
            }
            if lane.centerline.windows(2).any(|w| w[0] == w[1]) {
                return inv(format!("lane {} has repeated consecutive centerline points", lane.id));
            }
            if !(lane.width > 0.0) {
                return inv(format!("lane {} width must be > 0", lane.id));
            }
            if !(lane.speed_limit > 0.0) {
                return inv(format!("lane {} speed_limit must be > 0", lane.id));
            }
        }
        for lane in &self.lanes {
            for s in &lane.successors {
                if !lane_ids.contains(s) {
                    return inv(format!("lane {} successor {} does not resolve", lane.id, s));
                }
            }
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if ob.polygon.len() < 3 {
                return inv(format!("obstacle {i} polygon needs >= 3 vertices"));
            }
        }
        for (i, light) in self.lights.iter().enumerate() {
            if light.stop_line.0 == light.stop_line.1 {
                return inv(format!("light {i} stop_line is degenerate"));
            }
            if (light.approach.norm() - 1.0).abs() > 1e-6 {
                return inv(format!("light {i} approach direction must have unit norm"));
            }
            if light.schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
                return inv(format!("light {i} schedule must be strictly time-ordered"));
            }
        }
        let mut agent_ids = Vec::new();
        for agent in &self.agents {
            if agent_ids.contains(&agent.id) {
                return inv(format!("duplicate agent id {}", agent.id));
            }
            agent_ids.push(agent.id);
            if agent.track.len() < 2 {
                return inv(format!("agent {} track needs >= 2 samples", agent.id));
            }
            if agent.track.windows(2).any(|w| w[1].t <= w[0].t) {
                return inv(format!("agent {} track times must strictly increase", agent.id));
            }
            for s in &agent.track {
                if s.theta <= -std::f64::consts::PI || s.theta > std::f64::consts::PI {
                    return inv(format!(
                        "agent {} theta {} outside (-pi, pi]",
                        agent.id, s.theta
                    ));
                }
                if s.v < 0.0 {
                    return inv(format!("agent {} has negative speed {}", agent.id, s.v));
                }
                if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite() && s.v.is_finite()) {
                    return inv(format!("agent {} has non-finite track sample", agent.id));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File format (serde document types)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LaneDoc {
    id: i64,
    width: f64,
    speed_limit: f64,
    left_boundary: BoundaryKind,
    right_boundary: BoundaryKind,
    /// Flat [x0, y0, x1, y1, ...]
    centerline: Vec<f64>,
    #[serde(default)]
    successors: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct ObstacleDoc {
    /// Flat [x0, y0, x1, y1, ...]
    polygon: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleEntryDoc {
    t: f64,
    state: LightState,
}

#[derive(Serialize, Deserialize)]
struct LightDoc {
    stop_line: [f64; 4],
    approach: [f64; 2],
    schedule: Vec<ScheduleEntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct AgentDoc {
    id: i64,
    kind: AgentKind,
    /// Rows of [t, x, y, theta, v]
    track: Vec<[f64; 5]>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioDoc {
    frame_period: f64,
    player_id: i64,
    #[serde(default)]
    lanes: Vec<LaneDoc>,
    #[serde(default)]
    obstacles: Vec<ObstacleDoc>,
    #[serde(default)]
    lights: Vec<LightDoc>,
    #[serde(default)]
    agents: Vec<AgentDoc>,
}

fn pairs(flat: &[f64], what: &str) -> Result<Vec<Vec2>, ScenarioError> {
    if flat.len() % 2 != 0 {
        return Err(ScenarioError::Invariant(format!(
            "{what} needs an even number of coordinates, got {}",
            flat.len()
        )));
    }
    Ok(flat.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

impl ScenarioDoc {
    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let lanes = self
            .lanes
            .into_iter()
            .map(|l| {
                Ok(Lane {
                    id: l.id,
                    centerline: pairs(&l.centerline, "lane centerline")?,
                    width: l.width,
                    left_boundary: l.left_boundary,
                    right_boundary: l.right_boundary,
                    speed_limit: l.speed_limit,
                    successors: l.successors,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let obstacles = self
            .obstacles
            .into_iter()
            .map(|o| Ok(StaticObstacle { polygon: pairs(&o.polygon, "obstacle polygon")? }))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let lights = self
            .lights
            .into_iter()
            .map(|l| TrafficLight {
                stop_line: (Vec2::new(l.stop_line[0], l.stop_line[1]), Vec2::new(l.stop_line[2], l.stop_line[3])),
                approach: Vec2::new(l.approach[0], l.approach[1]),
                schedule: l.schedule.into_iter().map(|e| (e.t, e.state)).collect(),
            })
            .collect();
        let agents = self
            .agents
            .into_iter()
            .map(|a| AgentScript {
                id: a.id,
                kind: a.kind,
                track: a
                    .track
                    .into_iter()
                    .map(|r| PoseSample { t: r[0], x: r[1], y: r[2], theta: r[3], v: r[4] })
                    .collect(),
            })
            .collect();
        let scenario = Scenario {
            frame_period: self.frame_period,
            player_id: self.player_id,
            lanes,
            obstacles,
            lights,
            agents,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn from_scenario(s: &Scenario) -> ScenarioDoc {
        ScenarioDoc {
            frame_period: s.frame_period,
            player_id: s.player_id,
            lanes: s
                .lanes
                .iter()
                .map(|l| LaneDoc {
                    id: l.id,
                    width: l.width,
                    speed_limit: l.speed_limit,
                    left_boundary: l.left_boundary,
                    right_boundary: l.right_boundary,
                    centerline: l.centerline.iter().flat_map(|p| [p.x, p.y]).collect(),
                    successors: l.successors.clone(),
                })
                .collect(),
            obstacles: s
                .obstacles
                .iter()
                .map(|o| ObstacleDoc { polygon: o.polygon.iter().flat_map(|p| [p.x, p.y]).collect() })
                .collect(),
            lights: s
                .lights
                .iter()
                .map(|l| LightDoc {
                    stop_line: [l.stop_line.0.x, l.stop_line.0.y, l.stop_line.1.x, l.stop_line.1.y],
                    approach: [l.approach.x, l.approach.y],
                    schedule: l
                        .schedule
                        .iter()
                        .map(|&(t, state)| ScheduleEntryDoc { t, state })
                        .collect(),
                })
                .collect(),
            agents: s
                .agents
                .iter()
                .map(|a| AgentDoc {
                    id: a.id,
                    kind: a.kind,
                    track: a.track.iter().map(|p| [p.t, p.x, p.y, p.theta, p.v]).collect(),
                })
                .collect(),
        }
    }
}

/// Skip leading `#` comment lines (artifact headers) ahead of a JSON body.
pub fn strip_header_lines(text: &str) -> &str {
    let mut rest = text;
    loop {
        let trimmed = rest.trim_start_matches(['\r', '\n', ' ', '\t']);
        if let Some(after) = trimmed.strip_prefix('#') {
            match after.find('\n') {
                Some(i) => rest = &after[i + 1..],
                None => return "",
            }
        } else {
            return trimmed;
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let text = strip_header_lines(text);
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    doc.into_scenario()
}

pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_scenario(&text)
}

pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioDoc::from_scenario(s)).expect("scenario serializes")
}

pub fn save_scenario<P: AsRef<Path>>(s: &Scenario, path: P) -> Result<(), ScenarioError> {
    fs::write(path.as_ref(), serialize_scenario(s)).map_err(|e| ScenarioError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })
}

/// Normalize theta samples of a raw track into (-pi, pi].
pub fn normalize_track(track: &mut [PoseSample]) {
    for s in track {
        s.theta = wrap_angle(s.theta);
    }
}
