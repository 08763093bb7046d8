//! Built-in scripted scenarios reproducing the case studies: a curved
//! road, a left turn at an intersection with a construction zone, a
//! red-light stop beside construction, hard braking for a crossing
//! pedestrian, and a red-light offence at speed. Each fixture also
//! designates the frame its case study examines.

use std::f64::consts::FRAC_PI_2;

use crate::geometry::{point_at_arc_length, wrap_angle, Vec2};
use crate::scenario::{
    AgentKind, AgentScript, BoundaryKind, Lane, LightState, PoseSample, Scenario,
    StaticObstacle, TrafficLight,
};

/// Names accepted by [`case`], in presentation order.
pub const CASE_NAMES: [&str; 5] = [
    "curved_road",
    "intersection_construction",
    "red_light_construction",
    "pedestrian_braking",
    "red_light_offence",
];

/// Fixture by case name; `straight_lane` is also available.
pub fn case(name: &str) -> Option<Scenario> {
    match name {
        "curved_road" => Some(curved_road()),
        "intersection_construction" => Some(intersection_construction()),
        "red_light_construction" => Some(red_light_construction()),
        "pedestrian_braking" => Some(pedestrian_braking()),
        "red_light_offence" => Some(red_light_offence()),
        "straight_lane" => Some(straight_lane()),
        _ => None,
    }
}

/// The frame index each case study examines.
pub fn designated_frame(name: &str) -> Option<usize> {
    match name {
        "curved_road" => Some(80),
        "intersection_construction" => Some(44),
        "red_light_construction" => Some(60),
        "pedestrian_braking" => Some(45),
        "red_light_offence" => Some(58),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// construction helpers
// ---------------------------------------------------------------------------

fn lane(
    id: i64,
    centerline: Vec<Vec2>,
    width: f64,
    speed_limit: f64,
    successors: Vec<i64>,
) -> Lane {
    Lane {
        id,
        centerline,
        width,
        left_boundary: BoundaryKind::Solid,
        right_boundary: BoundaryKind::Solid,
        speed_limit,
        successors,
    }
}

fn segment(a: Vec2, b: Vec2, spacing: f64) -> Vec<Vec2> {
    let len = (b - a).norm();
    let n = (len / spacing).ceil().max(1.0) as usize;
    (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
}

/// Arc of radius `r` around `center`, sampled from angle `a0` to `a1`.
fn arc(center: Vec2, r: f64, a0: f64, a1: f64, step: f64) -> Vec<Vec2> {
    let n = ((a1 - a0).abs() / step).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            center + Vec2::new(a.cos(), a.sin()) * r
        })
        .collect()
}

fn join(parts: &[&[Vec2]]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for part in parts {
        for &p in *part {
            if out.last().map_or(true, |&l| (l - p).norm() > 1e-9) {
                out.push(p);
            }
        }
    }
    out
}

/// Sample a track that follows `path` by arc length with speed profile
/// `v_of_t`, starting at arc length `s0`.
fn path_track(path: &[Vec2], s0: f64, frames: usize, h: f64, v_of_t: impl Fn(f64) -> f64) -> Vec<PoseSample> {
    let mut s = s0;
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = i as f64 * h;
        let v = v_of_t(t);
        let p = point_at_arc_length(path, s);
        let behind = point_at_arc_length(path, (s - 0.05).max(0.0));
        let ahead = point_at_arc_length(path, s + 0.05);
        let theta = wrap_angle((ahead - behind).angle());
        out.push(PoseSample { t, x: p.x, y: p.y, theta, v });
        let v_next = v_of_t(t + h);
        s += 0.5 * (v + v_next) * h;
    }
    out
}

/// Straight-line track at constant velocity, two samples.
fn linear_track(start: Vec2, theta: f64, v: f64, t_end: f64) -> Vec<PoseSample> {
    let dir = Vec2::from_angle(theta);
    let end = start + dir * (v * t_end);
    vec![
        PoseSample { t: 0.0, x: start.x, y: start.y, theta, v },
        PoseSample { t: t_end, x: end.x, y: end.y, theta, v },
    ]
}

fn finish(scenario: Scenario) -> Scenario {
    scenario.validate().expect("fixture must be internally consistent");
    scenario
}

// ---------------------------------------------------------------------------
// fixtures
// ---------------------------------------------------------------------------

/// Plain straight road with a constant-speed player; the geometry oracle
/// fixture.
pub fn straight_lane() -> Scenario {
    finish(Scenario {
        frame_period: 0.1,
        player_id: 0,
        lanes: vec![lane(
            0,
            segment(Vec2::new(-50.0, 0.0), Vec2::new(150.0, 0.0), 10.0),
            4.0,
            12.0,
            vec![],
        )],
        obstacles: vec![],
        lights: vec![],
        agents: vec![AgentScript {
            id: 0,
            kind: AgentKind::Vehicle,
            track: linear_track(Vec2::new(-20.0, 0.0), 0.0, 8.0, 12.0),
        }],
    })
}

/// Long sweeping left curve (radius 40 m) driven at constant speed; the
/// baseline extrapolates tangentially while the lane bends away.
pub fn curved_road() -> Scenario {
    let center = Vec2::new(0.0, 40.0);
    let path = join(&[
        &segment(Vec2::new(-60.0, 0.0), Vec2::new(0.0, 0.0), 4.0),
        // angle from the circle center: -pi/2 at (0,0), sweeping 2 rad left
        &arc(center, 40.0, -FRAC_PI_2, -FRAC_PI_2 + 2.0, 0.05),
        &{
            let exit_start = center + Vec2::from_angle(-FRAC_PI_2 + 2.0) * 40.0;
            let heading = Vec2::from_angle(2.0);
            segment(exit_start, exit_start + heading * 40.0, 4.0)
        },
    ]);
    let track = path_track(&path, 20.0, 151, 0.1, |_| 7.0);
    finish(Scenario {
        frame_period: 0.1,
        player_id: 0,
        lanes: vec![lane(0, path, 4.0, 10.0, vec![])],
        obstacles: vec![],
        lights: vec![],
        agents: vec![AgentScript { id: 0, kind: AgentKind::Vehicle, track }],
    })
}

/// Crossroad with straight, left-turn, and right-turn branches, a
/// construction block crowding the straight exit, and a second vehicle.
/// The player slows and turns left.
pub fn intersection_construction() -> Scenario {
    let entry = segment(Vec2::new(-50.0, 0.0), Vec2::new(0.0, 0.0), 2.5);
    let straight = segment(Vec2::new(0.0, 0.0), Vec2::new(120.0, 0.0), 4.0);
    let left = join(&[
        &arc(Vec2::new(0.0, 12.0), 12.0, -FRAC_PI_2, 0.0, 0.08),
        &segment(Vec2::new(12.0, 12.0), Vec2::new(12.0, 55.0), 4.0),
    ]);
    let right = join(&[
        &arc(Vec2::new(0.0, -9.0), 9.0, FRAC_PI_2, 0.0, 0.08),
        &segment(Vec2::new(9.0, -9.0), Vec2::new(9.0, -40.0), 4.0),
    ]);

    let player_path = join(&[&segment(Vec2::new(-45.0, 0.0), Vec2::new(0.0, 0.0), 2.5), &left]);
    // cruise at 8, brake to the turn speed 6 just before the arc (the arc
    // begins 45 m along the path)
    let t_brake = 4.925;
    let v_of_t = move |t: f64| {
        if t < t_brake {
            8.0
        } else {
            (8.0 - 2.5 * (t - t_brake)).max(6.0)
        }
    };
    let track = path_track(&player_path, 0.0, 141, 0.1, v_of_t);

    finish(Scenario {
        frame_period: 0.1,
        player_id: 0,
        lanes: vec![
            lane(0, entry, 3.5, 10.0, vec![1, 2, 3]),
            lane(1, straight, 3.5, 10.0, vec![]),
            lane(2, left, 3.5, 10.0, vec![]),
            lane(3, right, 3.5, 10.0, vec![]),
        ],
        obstacles: vec![StaticObstacle {
            polygon: vec![
                Vec2::new(18.0, 1.0),
                Vec2::new(24.0, 1.0),
                Vec2::new(24.0, 4.0),
                Vec2::new(18.0, 4.0),
            ],
        }],
        lights: vec![],
        agents: vec![
            AgentScript { id: 0, kind: AgentKind::Vehicle, track },
            AgentScript {
                id: 1,
                kind: AgentKind::Vehicle,
                track: linear_track(Vec2::new(12.0, 0.0), 0.0, 6.0, 14.0),
            },
        ],
    })
}

/// Straight road, construction narrowing the approach, and a stop line
/// that stays red; the player brakes gently and holds 1.5 m short.
pub fn red_light_construction() -> Scenario {
    let t_brake = 3.0 + 5.0 / 12.0; // cruise at 6 covers 20.5 m first
    let v_of_t = move |t: f64| {
        if t < t_brake {
            6.0
        } else {
            (6.0 - (t - t_brake)).max(0.0)
        }
    };
    let path = segment(Vec2::new(-30.0, 0.0), Vec2::new(100.0, 0.0), 10.0);
    let track = path_track(&path, 10.0, 161, 0.1, v_of_t);
    finish(Scenario {
        frame_period: 0.1,
        player_id: 0,
        lanes: vec![lane(
            0,
            segment(Vec2::new(-60.0, 0.0), Vec2::new(100.0, 0.0), 10.0),
            4.0,
            12.0,
            vec![],
        )],
        obstacles: vec![StaticObstacle {
            polygon: vec![
                Vec2::new(12.0, 1.2),
                Vec2::new(17.0, 1.2),
                Vec2::new(17.0, 4.0),
                Vec2::new(12.0, 4.0),
            ],
        }],
        lights: vec![TrafficLight {
            stop_line: (Vec2::new(20.0, -3.0), Vec2::new(20.0, 3.0)),
            approach: Vec2::new(1.0, 0.0),
            schedule: vec![(0.0, LightState::Red)],
        }],
        agents: vec![AgentScript { id: 0, kind: AgentKind::Vehicle, track }],
    })
}

/// A pedestrian steps off the north curb and crosses while the player
/// approaches at speed; the scripted player brakes hard and stops short.
pub fn pedestrian_braking() -> Scenario {
    let v_of_t = |t: f64| {
        if t < 4.6 {
            8.0
        } else {
            (8.0 - 3.5 * (t - 4.6)).max(0.0)
        }
    };
    let path = segment(Vec2::new(-40.0, 0.0), Vec2::new(80.0, 0.0), 10.0);
    let player = path_track(&path, 12.0, 141, 0.1, v_of_t);

    // crossing at x = 20: waits on the curb (y = 6) until t = 2, then
    // walks south at 1.2 m/s
    let pedestrian: Vec<PoseSample> = (0..141)
        .map(|i| {
            let t = i as f64 * 0.1;
            let walking = t >= 2.0;
            PoseSample {
                t,
                x: 20.0,
                y: if walking { 6.0 - 1.2 * (t - 2.0) } else { 6.0 },
                theta: -FRAC_PI_2,
                v: if walking { 1.2 } else { 0.0 },
            }
        })
        .collect();

    finish(Scenario {
        frame_period: 0.1,
        player_id: 0,
        lanes: vec![lane(
            0,
            segment(Vec2::new(-40.0, 0.0), Vec2::new(80.0, 0.0), 10.0),
            4.0,
            10.0,
            vec![],
        )],
        obstacles: vec![],
        lights: vec![],
        agents: vec![
            AgentScript { id: 0, kind: AgentKind::Vehicle, track: player },
            AgentScript { id: 7, kind: AgentKind::Pedestrian, track: pedestrian },
        ],
    })
}

/// The light turns red while the player closes in at 15 m/s; stopping
/// would need far more than the feasible deceleration, so the scripted
/// player (and the prediction) cross on red.
pub fn red_light_offence() -> Scenario {
    finish(Scenario {
        frame_period: 0.1,
        player_id: 0,
        lanes: vec![lane(
            0,
            segment(Vec2::new(-80.0, 0.0), Vec2::new(120.0, 0.0), 10.0),
            4.0,
            16.0,
            vec![],
        )],
        obstacles: vec![],
        lights: vec![TrafficLight {
            stop_line: (Vec2::new(20.0, -3.0), Vec2::new(20.0, 3.0)),
            approach: Vec2::new(1.0, 0.0),
            schedule: vec![(0.0, LightState::Green), (5.0, LightState::Red)],
        }],
        agents: vec![AgentScript {
            id: 0,
            kind: AgentKind::Vehicle,
            track: linear_track(Vec2::new(-75.0, 0.0), 0.0, 15.0, 12.0),
        }],
    })
}
