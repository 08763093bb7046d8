//! Reference lines over the lane graph and red-light stop-line queries.
//!
//! A reference line is the polyline a vehicle would follow under a given
//! maneuver: walk the lane graph from the matched lane, pick successors
//! consistent with the maneuver, and resample. Maneuvers that have no
//! consistent continuation report a recoverable infeasibility error so
//! the caller can prune them.

use crate::geometry::{
    point_at_arc_length, polyline_length, project_on_polyline, wrap_angle, PolylineProjection,
    Vec2,
};
use crate::policy::PolicyLabel;
use crate::scenario::{Lane, LightState, PoseSample, Scenario};
use thiserror::Error;

/// Net heading change that qualifies a path as a turn (also used by the
/// window labeler), radians.
pub const TURN_THRESHOLD: f64 = 30.0 * std::f64::consts::PI / 180.0;
/// Spacing of resampled reference-line points, meters.
pub const RESAMPLE_SPACING: f64 = 1.0;
/// Arc length over which a lane change blends into the adjacent lane, meters.
pub const BLEND_LENGTH: f64 = 20.0;
/// A pose farther than this many lane widths from every centerline is unmatched.
pub const MATCH_GATE_WIDTHS: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum LaneError {
    #[error("no lane centerline near the query pose")]
    NoLaneMatched,
    #[error("maneuver {0:?} has no consistent lane-graph continuation here")]
    PolicyInfeasible(PolicyLabel),
}

/// Polyline a maneuver follows, resampled at roughly 1 m spacing.
#[derive(Debug, Clone)]
pub struct ReferenceLine {
    pub points: Vec<Vec2>,
    pub policy: PolicyLabel,
    /// Most restrictive speed limit among the lanes the line traverses;
    /// the policy interpreter may tighten it further to a speed the line's
    /// curvature can sustain within the acceleration bound.
    pub speed_limit: f64,
}

impl ReferenceLine {
    pub fn length(&self) -> f64 {
        polyline_length(&self.points)
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        point_at_arc_length(&self.points, s)
    }

    /// Unit direction of the segment containing arc length s
    /// (piecewise constant; clamped at the ends).
    pub fn direction_at(&self, s: f64) -> Vec2 {
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let len = (w[1] - w[0]).norm();
            if s <= acc + len {
                return (w[1] - w[0]).normalized();
            }
            acc += len;
        }
        let n = self.points.len();
        (self.points[n - 1] - self.points[n - 2]).normalized()
    }

    pub fn project(&self, p: Vec2) -> PolylineProjection {
        project_on_polyline(&self.points, p)
    }

    /// Largest discrete curvature (circumradius reciprocal over consecutive
    /// point triples) whose middle vertex lies within arc lengths [s0, s1].
    /// Returns 0.0 when the stretch is straight or too short to measure.
    pub fn max_curvature_between(&self, s0: f64, s1: f64) -> f64 {
        let mut max_kappa: f64 = 0.0;
        let mut acc = 0.0;
        for i in 1..self.points.len().saturating_sub(1) {
            acc += (self.points[i] - self.points[i - 1]).norm();
            if acc < s0 {
                continue;
            }
            if acc > s1 {
                break;
            }
            let (a, b, c) = (self.points[i - 1], self.points[i], self.points[i + 1]);
            let ab = b - a;
            let bc = c - b;
            let ca = a - c;
            let denom = ab.norm() * bc.norm() * ca.norm();
            if denom < 1e-9 {
                continue;
            }
            let area2 = (ab.x * bc.y - ab.y * bc.x).abs();
            max_kappa = max_kappa.max(2.0 * area2 / denom);
        }
        max_kappa
    }
}

/// Nearest lane by perpendicular centerline distance, ties broken by the
/// smallest heading difference to the pose, then by lane id.
pub fn match_lane<'a>(scenario: &'a Scenario, pose: &PoseSample) -> Result<&'a Lane, LaneError> {
    let p = pose.position();
    let mut best: Option<(f64, f64, i64, &Lane)> = None;
    for lane in &scenario.lanes {
        let proj = project_on_polyline(&lane.centerline, p);
        if proj.distance > MATCH_GATE_WIDTHS * lane.width {
            continue;
        }
        let seg_dir = lane.centerline[proj.segment + 1] - lane.centerline[proj.segment];
        let heading_diff = wrap_angle(seg_dir.angle() - pose.theta).abs();
        let better = match best {
            None => true,
            Some((d, hd, id, _)) => {
                if (proj.distance - d).abs() > 1e-9 {
                    proj.distance < d
                } else if (heading_diff - hd).abs() > 1e-9 {
                    heading_diff < hd
                } else {
                    lane.id < id
                }
            }
        };
        if better {
            best = Some((proj.distance, heading_diff, lane.id, lane));
        }
    }
    best.map(|(_, _, _, lane)| lane).ok_or(LaneError::NoLaneMatched)
}

/// Lane-graph paths (lists of lane ids) out of `start`, expanded until each
/// covers `needed` meters beyond the start arc offset or dead-ends.
fn enumerate_paths(scenario: &Scenario, start: &Lane, start_arc: f64, needed: f64) -> Vec<Vec<i64>> {
    const MAX_DEPTH: usize = 8;
    let mut out = Vec::new();
    let mut stack = vec![(vec![start.id], polyline_length(&start.centerline) - start_arc)];
    while let Some((path, covered)) = stack.pop() {
        let lane = scenario.lane(*path.last().unwrap()).unwrap();
        let succs: Vec<&Lane> = lane
            .successors
            .iter()
            .filter_map(|id| scenario.lane(*id))
            .filter(|l| !path.contains(&l.id))
            .collect();
        if covered >= needed || succs.is_empty() || path.len() >= MAX_DEPTH {
            out.push(path);
            continue;
        }
        for s in succs {
            let mut next = path.clone();
            next.push(s.id);
            stack.push((next, covered + polyline_length(&s.centerline)));
        }
    }
    out.sort();
    out
}

/// Concatenated centerline of a lane path, starting at `start_point` on the
/// first lane (after centerline segment `start_segment`).
fn path_polyline(
    scenario: &Scenario,
    path: &[i64],
    start_point: Vec2,
    start_segment: usize,
) -> Vec<Vec2> {
    let mut pts = vec![start_point];
    let first = scenario.lane(path[0]).unwrap();
    for &v in &first.centerline[start_segment + 1..] {
        push_distinct(&mut pts, v);
    }
    for &id in &path[1..] {
        let lane = scenario.lane(id).unwrap();
        for &v in &lane.centerline {
            push_distinct(&mut pts, v);
        }
    }
    pts
}

fn push_distinct(pts: &mut Vec<Vec2>, v: Vec2) {
    if pts.last().map_or(true, |last| (*last - v).norm() > 1e-9) {
        pts.push(v);
    }
}

/// Trim a polyline to `horizon` meters of arc length, extrapolating the last
/// segment straight ahead if the polyline is too short.
fn trim_or_extend(points: &[Vec2], horizon: f64) -> Vec<Vec2> {
    let total = polyline_length(points);
    let mut out: Vec<Vec2> = Vec::new();
    if total >= horizon {
        let mut acc = 0.0;
        push_distinct(&mut out, points[0]);
        for w in points.windows(2) {
            let len = (w[1] - w[0]).norm();
            if acc + len >= horizon {
                let t = (horizon - acc) / len;
                push_distinct(&mut out, w[0] + (w[1] - w[0]) * t);
                break;
            }
            push_distinct(&mut out, w[1]);
            acc += len;
        }
    } else {
        out = points.to_vec();
        let n = out.len();
        let dir = (out[n - 1] - out[n - 2]).normalized();
        let last = out[n - 1];
        out.push(last + dir * (horizon - total));
    }
    out
}

/// Total absolute turning along a polyline (straightness metric), radians.
fn total_turning(points: &[Vec2]) -> f64 {
    signed_turns(points).iter().map(|a| a.abs()).sum()
}

/// Net signed heading change along a polyline, radians (left positive).
fn net_turning(points: &[Vec2]) -> f64 {
    signed_turns(points).iter().sum()
}

fn signed_turns(points: &[Vec2]) -> Vec<f64> {
    let mut angles = Vec::new();
    for w in points.windows(2) {
        let d = w[1] - w[0];
        if d.norm() > 1e-12 {
            angles.push(d.angle());
        }
    }
    angles.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect()
}

fn resample(points: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let total = polyline_length(points);
    let mut out = Vec::new();
    let mut s = 0.0;
    while s < total {
        push_distinct(&mut out, point_at_arc_length(points, s));
        s += spacing;
    }
    push_distinct(&mut out, point_at_arc_length(points, total));
    if out.len() < 2 {
        out.push(out[0] + Vec2::new(spacing, 0.0));
    }
    out
}

fn path_speed_limit(scenario: &Scenario, path: &[i64]) -> f64 {
    path.iter()
        .filter_map(|id| scenario.lane(*id))
        .map(|l| l.speed_limit)
        .fold(f64::INFINITY, f64::min)
}

/// Reference polyline for a maneuver starting at `pose`, covering `horizon`
/// meters of arc length. The line starts at the projection of the pose onto
/// the matched centerline.
pub fn extract_reference_line(
    scenario: &Scenario,
    pose: &PoseSample,
    policy: PolicyLabel,
    horizon: f64,
) -> Result<ReferenceLine, LaneError> {
    let lane = match_lane(scenario, pose)?;
    let proj = project_on_polyline(&lane.centerline, pose.position());
    let paths = enumerate_paths(scenario, lane, proj.arc_length, horizon + RESAMPLE_SPACING);

    let scored: Vec<(&Vec<i64>, Vec<Vec2>)> = paths
        .iter()
        .map(|path| {
            let poly = path_polyline(scenario, path, proj.point, proj.segment);
            (path, trim_or_extend(&poly, horizon))
        })
        .collect();

    let chosen = match policy {
        PolicyLabel::Forward | PolicyLabel::Yield => scored
            .iter()
            .min_by(|a, b| total_turning(&a.1).total_cmp(&total_turning(&b.1))),
        PolicyLabel::TurnLeft => scored
            .iter()
            .filter(|(_, poly)| net_turning(poly) >= TURN_THRESHOLD)
            .max_by(|a, b| net_turning(&a.1).total_cmp(&net_turning(&b.1))),
        PolicyLabel::TurnRight => scored
            .iter()
            .filter(|(_, poly)| net_turning(poly) <= -TURN_THRESHOLD)
            .min_by(|a, b| net_turning(&a.1).total_cmp(&net_turning(&b.1))),
        PolicyLabel::LaneChangeLeft | PolicyLabel::LaneChangeRight => {
            let left = policy == PolicyLabel::LaneChangeLeft;
            return lane_change_line(scenario, lane, &proj, left, horizon, policy);
        }
    };

    let (path, poly) = chosen.ok_or(LaneError::PolicyInfeasible(policy))?;
    Ok(ReferenceLine {
        points: resample(poly, RESAMPLE_SPACING),
        policy,
        speed_limit: path_speed_limit(scenario, path),
    })
}

/// Adjacent same-direction lane on the requested side, or None.
fn adjacent_lane<'a>(
    scenario: &'a Scenario,
    lane: &Lane,
    proj: &PolylineProjection,
    left: bool,
) -> Option<&'a Lane> {
    let here_dir =
        (lane.centerline[proj.segment + 1] - lane.centerline[proj.segment]).normalized();
    let mut best: Option<(f64, i64, &Lane)> = None;
    for other in &scenario.lanes {
        if other.id == lane.id {
            continue;
        }
        let op = project_on_polyline(&other.centerline, proj.point);
        let other_dir =
            (other.centerline[op.segment + 1] - other.centerline[op.segment]).normalized();
        if wrap_angle(other_dir.angle() - here_dir.angle()).abs() > 60f64.to_radians() {
            continue;
        }
        let lateral = here_dir.cross(op.point - proj.point);
        if left != (lateral > 0.0) {
            continue;
        }
        let expected = (lane.width + other.width) / 2.0;
        let err = (lateral.abs() - expected).abs();
        if err > 0.6 * expected {
            continue;
        }
        let better = match best {
            None => true,
            Some((e, id, _)) => {
                if (err - e).abs() > 1e-9 {
                    err < e
                } else {
                    other.id < id
                }
            }
        };
        if better {
            best = Some((err, other.id, other));
        }
    }
    best.map(|(_, _, l)| l)
}

fn lane_change_line(
    scenario: &Scenario,
    lane: &Lane,
    proj: &PolylineProjection,
    left: bool,
    horizon: f64,
    policy: PolicyLabel,
) -> Result<ReferenceLine, LaneError> {
    let target = adjacent_lane(scenario, lane, proj, left)
        .ok_or(LaneError::PolicyInfeasible(policy))?;
    let tproj = project_on_polyline(&target.centerline, proj.point);

    let src_paths = enumerate_paths(scenario, lane, proj.arc_length, horizon + RESAMPLE_SPACING);
    let src = src_paths
        .iter()
        .map(|p| trim_or_extend(&path_polyline(scenario, p, proj.point, proj.segment), horizon))
        .min_by(|a, b| total_turning(a).total_cmp(&total_turning(b)))
        .unwrap();
    let tgt_paths =
        enumerate_paths(scenario, target, tproj.arc_length, horizon + RESAMPLE_SPACING);
    let (tgt_path, tgt) = tgt_paths
        .iter()
        .map(|p| {
            (p, trim_or_extend(&path_polyline(scenario, p, tproj.point, tproj.segment), horizon))
        })
        .min_by(|a, b| total_turning(&a.1).total_cmp(&total_turning(&b.1)))
        .unwrap();

    let blend = BLEND_LENGTH.min(horizon);
    let mut pts = Vec::new();
    let mut s = 0.0;
    while s <= horizon + 1e-9 {
        let u = (s / blend).clamp(0.0, 1.0);
        let sigma = u * u * (3.0 - 2.0 * u);
        let p = point_at_arc_length(&src, s) * (1.0 - sigma) + point_at_arc_length(&tgt, s) * sigma;
        push_distinct(&mut pts, p);
        s += RESAMPLE_SPACING;
    }
    if pts.len() < 2 {
        return Err(LaneError::PolicyInfeasible(policy));
    }
    Ok(ReferenceLine {
        points: pts,
        policy,
        speed_limit: path_speed_limit(scenario, tgt_path).min(lane.speed_limit),
    })
}

/// Result of a stop-line proximity query.
#[derive(Debug, Clone, Copy)]
pub struct StopLineQuery {
    /// Perpendicular distance from the point to the line, ≥ 0.
    pub distance: f64,
    /// Unit direction of the repulsive force (opposes the approach).
    pub direction: Vec2,
    /// Unit normal of the stop line aligned with the approach; the
    /// distance decreases along it, so ∇distance = −normal.
    pub normal: Vec2,
}

/// Geometry of a single stop line: Some when `p` is on the approach side
/// and laterally within the line segment (plus a small margin).
pub fn stop_line_query(stop_line: (Vec2, Vec2), approach: Vec2, p: Vec2) -> Option<StopLineQuery> {
    const LATERAL_MARGIN: f64 = 2.0;
    let (a, b) = stop_line;
    let axis = b - a;
    let len = axis.norm();
    let mut normal = axis.normalized().left_normal();
    if normal.dot(approach) < 0.0 {
        normal = -normal;
    }
    let d = (a - p).dot(normal);
    if d < 0.0 {
        return None; // already past the line
    }
    let along = (p - a).dot(axis.normalized());
    if along < -LATERAL_MARGIN || along > len + LATERAL_MARGIN {
        return None;
    }
    Some(StopLineQuery { distance: d, direction: -approach, normal })
}

/// Perpendicular distance to the nearest red stop line ahead of `p` at time
/// `t`, with the unit direction opposing travel; None when every light is
/// green, `p` is already past the line, or `p` is laterally clear of it.
pub fn red_light_distance(scenario: &Scenario, p: Vec2, t: f64) -> Option<(f64, Vec2)> {
    let mut best: Option<(f64, Vec2)> = None;
    for light in &scenario.lights {
        if light.state_at(t) != LightState::Red {
            continue;
        }
        if let Some(q) = stop_line_query(light.stop_line, light.approach, p) {
            if best.map_or(true, |(bd, _)| q.distance < bd) {
                best = Some((q.distance, q.direction));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{AgentKind, AgentScript, BoundaryKind, TrafficLight};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lane(id: i64, pts: &[(f64, f64)], successors: &[i64]) -> Lane {
        Lane {
            id,
            centerline: pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            width: 3.5,
            left_boundary: BoundaryKind::Solid,
            right_boundary: BoundaryKind::Solid,
            speed_limit: 10.0,
            successors: successors.to_vec(),
        }
    }

    fn scenario_with(lanes: Vec<Lane>) -> Scenario {
        Scenario {
            frame_period: 0.1,
            player_id: 0,
            lanes,
            obstacles: vec![],
            lights: vec![],
            agents: vec![AgentScript {
                id: 0,
                kind: AgentKind::Vehicle,
                track: vec![
                    PoseSample { t: 0.0, x: 0.0, y: 0.0, theta: 0.0, v: 5.0 },
                    PoseSample { t: 1.0, x: 5.0, y: 0.0, theta: 0.0, v: 5.0 },
                ],
            }],
        }
    }

    fn pose(x: f64, y: f64, theta: f64) -> PoseSample {
        PoseSample { t: 0.0, x, y, theta, v: 5.0 }
    }

    #[test]
    fn forward_on_straight_lane_is_the_centerline_ahead() {
        let s = scenario_with(vec![lane(0, &[(0.0, 0.0), (100.0, 0.0)], &[])]);
        let r =
            extract_reference_line(&s, &pose(10.0, 0.5, 0.0), PolicyLabel::Forward, 40.0).unwrap();
        assert!((r.points[0] - Vec2::new(10.0, 0.0)).norm() < 1e-6);
        for p in &r.points {
            assert!(p.y.abs() < 1e-9);
        }
        assert_relative_eq!(r.length(), 40.0, epsilon = 1e-6);
        assert_eq!(r.speed_limit, 10.0);
    }

    #[test]
    fn forward_extends_past_a_dead_end() {
        let s = scenario_with(vec![lane(0, &[(0.0, 0.0), (20.0, 0.0)], &[])]);
        let r =
            extract_reference_line(&s, &pose(10.0, 0.0, 0.0), PolicyLabel::Forward, 50.0).unwrap();
        assert_relative_eq!(r.length(), 50.0, epsilon = 1e-6);
        let end = *r.points.last().unwrap();
        assert!((end - Vec2::new(60.0, 0.0)).norm() < 1e-6);
    }

    fn t_intersection() -> Scenario {
        // approach lane 0 ends at (30,0); lane 1 turns left (ends heading +y),
        // lane 2 keeps straight
        let quarter_left: Vec<(f64, f64)> = (0..=8)
            .map(|i| {
                let a = i as f64 / 8.0 * std::f64::consts::FRAC_PI_2;
                (30.0 + 12.0 * a.sin(), 12.0 - 12.0 * a.cos())
            })
            .collect();
        scenario_with(vec![
            lane(0, &[(0.0, 0.0), (30.0, 0.0)], &[1, 2]),
            lane(1, &quarter_left, &[]),
            lane(2, &[(30.0, 0.0), (80.0, 0.0)], &[]),
        ])
    }

    #[test]
    fn turn_left_follows_the_left_branch() {
        let s = t_intersection();
        let r =
            extract_reference_line(&s, &pose(10.0, 0.0, 0.0), PolicyLabel::TurnLeft, 45.0).unwrap();
        let end = *r.points.last().unwrap();
        assert!(end.y > 8.0, "end {end:?} should be up the left branch");
        // the line leaves along the approach lane first
        assert!((r.points[0] - Vec2::new(10.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn forward_at_a_fork_takes_the_straight_branch() {
        let s = t_intersection();
        let r =
            extract_reference_line(&s, &pose(10.0, 0.0, 0.0), PolicyLabel::Forward, 45.0).unwrap();
        let end = *r.points.last().unwrap();
        assert!(end.y.abs() < 1e-6, "end {end:?} should stay on the straight branch");
    }

    #[test]
    fn turn_right_without_a_right_branch_is_infeasible() {
        let s = t_intersection();
        let err = extract_reference_line(&s, &pose(10.0, 0.0, 0.0), PolicyLabel::TurnRight, 45.0)
            .unwrap_err();
        assert_eq!(err, LaneError::PolicyInfeasible(PolicyLabel::TurnRight));
    }

    #[test]
    fn no_lane_near_pose_is_a_distinct_error() {
        let s = scenario_with(vec![lane(0, &[(0.0, 0.0), (100.0, 0.0)], &[])]);
        let err = extract_reference_line(&s, &pose(50.0, 50.0, 0.0), PolicyLabel::Forward, 40.0)
            .unwrap_err();
        assert_eq!(err, LaneError::NoLaneMatched);
    }

    #[test]
    fn lane_change_left_blends_into_the_adjacent_lane() {
        let s = scenario_with(vec![
            lane(0, &[(0.0, 0.0), (100.0, 0.0)], &[]),
            lane(1, &[(0.0, 3.5), (100.0, 3.5)], &[]),
        ]);
        let r =
            extract_reference_line(&s, &pose(10.0, 0.0, 0.0), PolicyLabel::LaneChangeLeft, 50.0)
                .unwrap();
        assert!((r.points[0] - Vec2::new(10.0, 0.0)).norm() < 1e-6);
        let end = *r.points.last().unwrap();
        assert_relative_eq!(end.y, 3.5, epsilon = 1e-6);
        // lateral offset is monotone through the blend
        for w in r.points.windows(2) {
            assert!(w[1].y >= w[0].y - 1e-9);
        }
        // and the right-hand change is infeasible (no lane there)
        let err = extract_reference_line(&s, &pose(10.0, 0.0, 0.0), PolicyLabel::LaneChangeRight, 50.0)
            .unwrap_err();
        assert_eq!(err, LaneError::PolicyInfeasible(PolicyLabel::LaneChangeRight));
    }

    #[test]
    fn match_lane_breaks_distance_ties_by_heading() {
        let s = scenario_with(vec![
            lane(0, &[(-50.0, 0.0), (50.0, 0.0)], &[]),
            lane(1, &[(0.0, -50.0), (0.0, 50.0)], &[]),
        ]);
        // at the crossing point both centerlines are at distance 0
        let up = match_lane(&s, &pose(0.0, 0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        assert_eq!(up.id, 1);
        let flat = match_lane(&s, &pose(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(flat.id, 0);
    }

    fn red_light_scenario() -> Scenario {
        let mut s = scenario_with(vec![lane(0, &[(0.0, 0.0), (100.0, 0.0)], &[])]);
        s.lights.push(TrafficLight {
            stop_line: (Vec2::new(40.0, -3.0), Vec2::new(40.0, 3.0)),
            approach: Vec2::new(1.0, 0.0),
            schedule: vec![(0.0, LightState::Red), (30.0, LightState::Green)],
        });
        s
    }

    #[test]
    fn red_light_five_meters_ahead() {
        let s = red_light_scenario();
        let (d, dir) = red_light_distance(&s, Vec2::new(35.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(d, 5.0, epsilon = 1e-12);
        assert_relative_eq!(dir.x, -1.0, epsilon = 1e-12);
        assert_relative_eq!(dir.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn green_light_or_crossed_line_gives_none() {
        let s = red_light_scenario();
        assert!(red_light_distance(&s, Vec2::new(35.0, 0.0), 31.0).is_none());
        assert!(red_light_distance(&s, Vec2::new(41.0, 0.0), 1.0).is_none());
        // laterally clear of the stop line (other road of the junction)
        assert!(red_light_distance(&s, Vec2::new(35.0, 9.0), 1.0).is_none());
    }

    proptest! {
        #[test]
        fn reference_line_starts_at_the_centerline_projection(
            x in 5.0..60.0f64, y in -1.5..1.5f64, theta in -0.3..0.3f64
        ) {
            let s = scenario_with(vec![lane(0, &[(0.0, 0.0), (100.0, 0.0)], &[])]);
            let r = extract_reference_line(&s, &pose(x, y, theta), PolicyLabel::Forward, 40.0)
                .unwrap();
            let proj = project_on_polyline(&s.lanes[0].centerline, Vec2::new(x, y));
            prop_assert!((r.points[0] - proj.point).norm() < 1e-6);
            // consecutive points distinct
            for w in r.points.windows(2) {
                prop_assert!((w[1] - w[0]).norm() > 1e-9);
            }
        }
    }
}
