//! The seven trajectory cost terms with analytic gradients, their
//! summation, and the rendered multi-layer cost-map grid.
//!
//! Every term is a weighted perfect square of a hinge expression, so the
//! total is a genuine nonlinear least-squares objective: the solver
//! consumes `residual_entries` (each residual = √(w·h·α) × hinge), while
//! the per-term functions report plain values and gradients for
//! diagnostics and the rendered map.

use serde::{Deserialize, Serialize};

use crate::geometry::{dist_point_segment, Rect, Vec2};
use crate::lanes::{stop_line_query, ReferenceLine, StopLineQuery};
use crate::scenario::{BoundaryKind, Lane, LightState, Scenario};
use crate::sdf::{build_lane_sdf, build_obstacle_sdf, DistanceField, FieldError};
use crate::trajectory::DiscreteTrajectory;

/// Magnitudes, thresholds, and term weights of the trajectory objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Lane-boundary cost magnitude (solid boundaries).
    pub alpha_g: f64,
    /// Reduced magnitude for broken (crossable) boundaries.
    pub alpha_g_broken: f64,
    /// Moving-obstacle cost magnitude.
    pub alpha_d: f64,
    /// Red-light cost magnitude.
    pub alpha_r: f64,
    /// Curvature-excess cost magnitude.
    pub alpha_kappa: f64,
    /// Acceleration-excess cost magnitude.
    pub alpha_a: f64,
    /// Lane/obstacle clearance threshold, meters.
    pub tau_b: f64,
    /// Moving-obstacle clearance threshold, meters.
    pub tau_o: f64,
    /// Red-light influence radius, meters.
    pub tau_r: f64,
    /// Curvature feasibility bound, 1/meters.
    pub kappa_max: f64,
    /// Acceleration feasibility bound, m/s².
    pub a_max: f64,
    pub w_g: f64,
    pub w_s: f64,
    pub w_d: f64,
    pub w_r: f64,
    pub w_v: f64,
    pub w_kappa: f64,
    pub w_a: f64,
}

impl Default for CostParams {
    fn default() -> CostParams {
        CostParams {
            alpha_g: 1.0,
            alpha_g_broken: 0.05,
            alpha_d: 1.0,
            alpha_r: 1.0,
            alpha_kappa: 1.0,
            alpha_a: 1.0,
            tau_b: 0.5,
            tau_o: 6.0,
            tau_r: 20.0,
            kappa_max: 0.2,
            a_max: 4.0,
            w_g: 20.0,
            w_s: 20.0,
            w_d: 50.0,
            w_r: 0.05,
            w_v: 1.0,
            w_kappa: 50.0,
            w_a: 2.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), String> {
        let thresholds = [
            ("tau_b", self.tau_b),
            ("tau_o", self.tau_o),
            ("tau_r", self.tau_r),
            ("kappa_max", self.kappa_max),
            ("a_max", self.a_max),
            ("alpha_g", self.alpha_g),
            ("alpha_g_broken", self.alpha_g_broken),
            ("alpha_d", self.alpha_d),
            ("alpha_r", self.alpha_r),
            ("alpha_kappa", self.alpha_kappa),
            ("alpha_a", self.alpha_a),
        ];
        for (name, v) in thresholds {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be a positive finite number, got {v}"));
            }
        }
        let weights = [
            ("w_g", self.w_g),
            ("w_s", self.w_s),
            ("w_d", self.w_d),
            ("w_r", self.w_r),
            ("w_v", self.w_v),
            ("w_kappa", self.w_kappa),
            ("w_a", self.w_a),
        ];
        for (name, v) in weights {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be a finite number ≥ 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// A traffic light that is red at the prediction epoch.
#[derive(Debug, Clone)]
pub struct ResolvedRedLight {
    pub stop_line: (Vec2, Vec2),
    pub approach: Vec2,
}

/// Everything one optimization round reads: distance fields, red lights
/// resolved at the prediction epoch, the desired speed profile, and the
/// other agents' previous-round predictions.
#[derive(Debug, Clone)]
pub struct ContextSnapshot {
    pub lane_sdf_solid: DistanceField,
    pub lane_sdf_broken: DistanceField,
    pub obstacle_sdf: DistanceField,
    pub red_lights: Vec<ResolvedRedLight>,
    /// Scalar desired speed, already min(speed limit, observed trend).
    pub desired_speed: f64,
    /// Active reference line; desired velocity direction follows it.
    pub reference: ReferenceLine,
    /// Other agents' predictions from the previous round, sorted by agent
    /// id; each shares N and h with the trajectory being optimized.
    pub mo_predictions: Vec<(i64, DiscreteTrajectory)>,
    /// Lane geometry retained for per-position speed limits in the
    /// rendered map.
    pub lanes: Vec<Lane>,
}

impl ContextSnapshot {
    /// Build the fields over `region` and resolve light states at `epoch`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        scenario: &Scenario,
        region: Rect,
        cell_size: f64,
        epoch: f64,
        reference: ReferenceLine,
        desired_speed: f64,
        mut mo_predictions: Vec<(i64, DiscreteTrajectory)>,
    ) -> Result<ContextSnapshot, FieldError> {
        let lane_sdf_solid = build_lane_sdf(scenario, region, cell_size, BoundaryKind::Solid)?;
        let lane_sdf_broken = build_lane_sdf(scenario, region, cell_size, BoundaryKind::Broken)?;
        let obstacle_sdf = build_obstacle_sdf(scenario, region, cell_size)?;
        let red_lights = scenario
            .lights
            .iter()
            .filter(|l| l.state_at(epoch) == LightState::Red)
            .map(|l| ResolvedRedLight { stop_line: l.stop_line, approach: l.approach })
            .collect();
        mo_predictions.sort_by_key(|(id, _)| *id);
        Ok(ContextSnapshot {
            lane_sdf_solid,
            lane_sdf_broken,
            obstacle_sdf,
            red_lights,
            desired_speed,
            reference,
            mo_predictions,
            lanes: scenario.lanes.clone(),
        })
    }

    /// Nearest red stop line ahead of `p` (resolved at the epoch).
    pub fn red_query(&self, p: Vec2) -> Option<StopLineQuery> {
        let mut best: Option<StopLineQuery> = None;
        for light in &self.red_lights {
            if let Some(q) = stop_line_query(light.stop_line, light.approach, p) {
                if best.map_or(true, |b| q.distance < b.distance) {
                    best = Some(q);
                }
            }
        }
        best
    }

    /// Speed limit of the nearest lane, or None when no lane is near `p`.
    pub fn local_speed_limit(&self, p: Vec2) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for lane in &self.lanes {
            let mut d = f64::INFINITY;
            for w in lane.centerline.windows(2) {
                d = d.min(dist_point_segment(w[0], w[1], p));
            }
            if d <= 2.0 * lane.width && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, lane.speed_limit));
            }
        }
        best.map(|(_, v)| v)
    }

    /// Desired velocity vector at trajectory point `p`: magnitude
    /// `desired_speed`, direction of the reference line at the arc length
    /// of `p`'s projection.
    pub fn desired_velocity(&self, p: Vec2) -> Vec2 {
        let proj = self.reference.project(p);
        self.reference.direction_at(proj.arc_length) * self.desired_speed
    }
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Lane-keeping cost at a point: quadratic ramp inside the clearance
/// threshold of a solid boundary (and, much weaker, of a broken one),
/// growing quadratically outside the corridor.
pub fn lane_cost(
    ctx: &ContextSnapshot,
    params: &CostParams,
    p: Vec2,
) -> Result<(f64, Vec2), FieldError> {
    let (d_solid, g_solid) = ctx.lane_sdf_solid.sample(p)?;
    let (d_broken, g_broken) = ctx.lane_sdf_broken.sample(p)?;
    let u_s = hinge(params.tau_b - d_solid);
    let u_b = hinge(params.tau_b - d_broken);
    let value = params.alpha_g * u_s * u_s + params.alpha_g_broken * u_b * u_b;
    let grad = g_solid * (-2.0 * params.alpha_g * u_s)
        + g_broken * (-2.0 * params.alpha_g_broken * u_b);
    Ok((value, grad))
}

/// Static-obstacle cost at a point; same shape as the lane term over the
/// obstacle field.
pub fn obstacle_cost(
    ctx: &ContextSnapshot,
    params: &CostParams,
    p: Vec2,
) -> Result<(f64, Vec2), FieldError> {
    let (d, g) = ctx.obstacle_sdf.sample(p)?;
    let u = hinge(params.tau_b - d);
    Ok((params.alpha_g * u * u, g * (-2.0 * params.alpha_g * u)))
}

/// Moving-obstacle cost at index `i`: sum over agents of a quadratic ramp
/// inside the clearance radius around each agent's predicted point at the
/// same index.
pub fn moving_obstacle_cost(
    ctx: &ContextSnapshot,
    params: &CostParams,
    traj: &DiscreteTrajectory,
    i: usize,
) -> (f64, Vec2) {
    let p = traj.point(i);
    let mut value = 0.0;
    let mut grad = Vec2::ZERO;
    for (_, mo) in &ctx.mo_predictions {
        let delta = p - mo.point(i);
        let d = delta.norm();
        let u = hinge(params.tau_o - d);
        value += params.alpha_d * u * u;
        if u > 0.0 && d > 1e-12 {
            grad += delta * (-2.0 * params.alpha_d * u / d);
        }
    }
    (value, grad)
}

/// Red-light cost at index `i`: quadratic ramp inside the influence
/// radius, scaled by the squared velocity component toward the line.
/// Motion away from or parallel to the line is free.
pub fn red_light_cost(
    ctx: &ContextSnapshot,
    params: &CostParams,
    traj: &DiscreteTrajectory,
    i: usize,
) -> (f64, Vec2, Vec2) {
    let p = traj.point(i);
    let Some(q) = ctx.red_query(p) else {
        return (0.0, Vec2::ZERO, Vec2::ZERO);
    };
    if q.distance <= 0.0 || q.distance > params.tau_r {
        return (0.0, Vec2::ZERO, Vec2::ZERO);
    }
    let approach = -q.direction;
    let s = traj.velocity(i).dot(approach);
    if s <= 0.0 {
        return (0.0, Vec2::ZERO, Vec2::ZERO);
    }
    let u = params.tau_r - q.distance;
    let value = params.alpha_r * u * u * s * s;
    // ∇_p distance = −normal; ∂s/∂x_i = −approach/h; ∂s/∂x_{i+1} = approach/h
    let h = traj.h();
    let grad_i = q.normal * (2.0 * params.alpha_r * u * s * s)
        + approach * (-2.0 * params.alpha_r * u * u * s / h);
    let grad_next = approach * (2.0 * params.alpha_r * u * u * s / h);
    (value, grad_i, grad_next)
}

/// Speed-tracking cost at index `i`: squared deviation of the finite-
/// difference velocity from the desired velocity vector.
pub fn speed_cost(
    ctx: &ContextSnapshot,
    params: &CostParams,
    traj: &DiscreteTrajectory,
    i: usize,
) -> (f64, Vec2, Vec2) {
    let _ = params;
    let v = traj.velocity(i);
    let v_des = ctx.desired_velocity(traj.point(i));
    let e = v - v_des;
    let h = traj.h();
    // direction_at is piecewise constant in the projection arc, so the
    // desired direction contributes no gradient almost everywhere
    (e.dot(e), e * (-2.0 / h), e * (2.0 / h))
}

/// Curvature-feasibility cost at index `i`: quadratic ramp of |κ| above
/// the bound. Gradients cover the three stencil points.
pub fn curvature_cost(
    params: &CostParams,
    traj: &DiscreteTrajectory,
    i: usize,
) -> (f64, [Vec2; 3]) {
    let kappa = traj.curvature(i);
    let u = hinge(kappa.abs() - params.kappa_max);
    if u == 0.0 {
        return (0.0, [Vec2::ZERO; 3]);
    }
    let value = params.alpha_kappa * u * u;
    let scale = 2.0 * params.alpha_kappa * u * kappa.signum();
    let g = kappa_gradients(traj, i);
    (value, [g[0] * scale, g[1] * scale, g[2] * scale])
}

/// ∂κ/∂x_{i−1}, ∂κ/∂x_i, ∂κ/∂x_{i+1} via the finite-difference stencils.
fn kappa_gradients(traj: &DiscreteTrajectory, i: usize) -> [Vec2; 3] {
    let h = traj.h();
    let v = traj.velocity(i);
    let a = traj.acceleration(i);
    let speed = v.norm();
    let c = v.cross(a);
    let s3 = speed.powi(3);
    let s5 = speed.powi(5);
    let dk_dv = Vec2::new(a.y / s3 - 3.0 * c * v.x / s5, -a.x / s3 - 3.0 * c * v.y / s5);
    let dk_da = Vec2::new(-v.y / s3, v.x / s3);
    // v = (x_{i+1} − x_i)/h;  a = (x_{i+1} − 2x_i + x_{i−1})/h²
    let h2 = h * h;
    [
        dk_da / h2,
        dk_dv * (-1.0 / h) + dk_da * (-2.0 / h2),
        dk_dv * (1.0 / h) + dk_da * (1.0 / h2),
    ]
}

/// Acceleration-feasibility cost at index `i`: quadratic ramp of ‖ẍ‖
/// above the bound.
pub fn acceleration_cost(
    params: &CostParams,
    traj: &DiscreteTrajectory,
    i: usize,
) -> (f64, [Vec2; 3]) {
    let a = traj.acceleration(i);
    let n = a.norm();
    let u = hinge(n - params.a_max);
    if u == 0.0 || n < 1e-12 {
        return (0.0, [Vec2::ZERO; 3]);
    }
    let value = params.alpha_a * u * u;
    let dn_da = a / n;
    let h2 = traj.h() * traj.h();
    let scale = 2.0 * params.alpha_a * u;
    (
        value,
        [
            dn_da * (scale / h2),
            dn_da * (-2.0 * scale / h2),
            dn_da * (scale / h2),
        ],
    )
}

/// Weighted per-term sums of the trajectory objective (each already
/// multiplied by its weight and the time step).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub lane: f64,
    pub obstacle: f64,
    pub moving: f64,
    pub red_light: f64,
    pub speed: f64,
    pub curvature: f64,
    pub acceleration: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.lane
            + self.obstacle
            + self.moving
            + self.red_light
            + self.speed
            + self.curvature
            + self.acceleration
    }
}

/// Total objective over the trajectory. Terms whose derivative stencils
/// are undefined at boundary indices are skipped there: velocity-based
/// terms cover i < N−1, second-derivative terms cover 1 ≤ i < N−1,
/// positional terms cover every index.
pub fn total_cost(
    ctx: &ContextSnapshot,
    params: &CostParams,
    traj: &DiscreteTrajectory,
) -> Result<(f64, CostBreakdown), FieldError> {
    for (_, mo) in &ctx.mo_predictions {
        assert_eq!(mo.len(), traj.len(), "moving-obstacle predictions must share N");
    }
    let n = traj.len();
    let h = traj.h();
    let mut b = CostBreakdown::default();
    for i in 0..n {
        if params.w_g > 0.0 {
            b.lane += params.w_g * h * lane_cost(ctx, params, traj.point(i))?.0;
        }
        if params.w_s > 0.0 {
            b.obstacle += params.w_s * h * obstacle_cost(ctx, params, traj.point(i))?.0;
        }
        if params.w_d > 0.0 {
            b.moving += params.w_d * h * moving_obstacle_cost(ctx, params, traj, i).0;
        }
        if i < n - 1 {
            if params.w_r > 0.0 {
                b.red_light += params.w_r * h * red_light_cost(ctx, params, traj, i).0;
            }
            if params.w_v > 0.0 {
                b.speed += params.w_v * h * speed_cost(ctx, params, traj, i).0;
            }
        }
        if i >= 1 && i < n - 1 {
            if params.w_kappa > 0.0 {
                b.curvature += params.w_kappa * h * curvature_cost(params, traj, i).0;
            }
            if params.w_a > 0.0 {
                b.acceleration += params.w_a * h * acceleration_cost(params, traj, i).0;
            }
        }
    }
    Ok((b.total(), b))
}

/// One residual of the least-squares objective: `value` and its gradient
/// w.r.t. the trajectory points it touches (at most three).
#[derive(Debug, Clone)]
pub struct ResidualEntry {
    pub value: f64,
    pub grads: Vec<(usize, Vec2)>,
}

/// Assemble the objective as residuals: J = Σ rₖ². Every cost term is a
/// perfect square w·h·α·u², so rₖ = √(w·h·α)·u with ∇rₖ = √(w·h·α)·∇u.
/// Residuals that are identically zero with zero gradient are omitted.
pub fn residual_entries(
    ctx: &ContextSnapshot,
    params: &CostParams,
    traj: &DiscreteTrajectory,
) -> Result<Vec<ResidualEntry>, FieldError> {
    for (_, mo) in &ctx.mo_predictions {
        assert_eq!(mo.len(), traj.len(), "moving-obstacle predictions must share N");
    }
    let n = traj.len();
    let h = traj.h();
    let mut out = Vec::with_capacity(4 * n);

    for i in 0..n {
        let p = traj.point(i);
        if params.w_g > 0.0 {
            let (d_solid, g_solid) = ctx.lane_sdf_solid.sample(p)?;
            let u = hinge(params.tau_b - d_solid);
            if u > 0.0 {
                let k = (params.w_g * h * params.alpha_g).sqrt();
                out.push(ResidualEntry { value: k * u, grads: vec![(i, g_solid * (-k))] });
            }
            let (d_broken, g_broken) = ctx.lane_sdf_broken.sample(p)?;
            let u = hinge(params.tau_b - d_broken);
            if u > 0.0 {
                let k = (params.w_g * h * params.alpha_g_broken).sqrt();
                out.push(ResidualEntry { value: k * u, grads: vec![(i, g_broken * (-k))] });
            }
        }
        if params.w_s > 0.0 {
            let (d, g) = ctx.obstacle_sdf.sample(p)?;
            let u = hinge(params.tau_b - d);
            if u > 0.0 {
                let k = (params.w_s * h * params.alpha_g).sqrt();
                out.push(ResidualEntry { value: k * u, grads: vec![(i, g * (-k))] });
            }
        }
        if params.w_d > 0.0 {
            let k = (params.w_d * h * params.alpha_d).sqrt();
            for (_, mo) in &ctx.mo_predictions {
                let delta = p - mo.point(i);
                let d = delta.norm();
                let u = hinge(params.tau_o - d);
                if u > 0.0 {
                    let grad =
                        if d > 1e-12 { delta * (-k / d) } else { Vec2::ZERO };
                    out.push(ResidualEntry { value: k * u, grads: vec![(i, grad)] });
                }
            }
        }
        if i < n - 1 {
            if params.w_r > 0.0 {
                if let Some(q) = ctx.red_query(p) {
                    if q.distance > 0.0 && q.distance <= params.tau_r {
                        let approach = -q.direction;
                        let s = traj.velocity(i).dot(approach);
                        if s > 0.0 {
                            let k = (params.w_r * h * params.alpha_r).sqrt();
                            let u = params.tau_r - q.distance;
                            out.push(ResidualEntry {
                                value: k * u * s,
                                grads: vec![
                                    (i, q.normal * (k * s) + approach * (-k * u / h)),
                                    (i + 1, approach * (k * u / h)),
                                ],
                            });
                        }
                    }
                }
            }
            if params.w_v > 0.0 {
                let k = (params.w_v * h).sqrt();
                let v = traj.velocity(i);
                let v_des = ctx.desired_velocity(p);
                let e = v - v_des;
                out.push(ResidualEntry {
                    value: k * e.x,
                    grads: vec![
                        (i, Vec2::new(-k / h, 0.0)),
                        (i + 1, Vec2::new(k / h, 0.0)),
                    ],
                });
                out.push(ResidualEntry {
                    value: k * e.y,
                    grads: vec![
                        (i, Vec2::new(0.0, -k / h)),
                        (i + 1, Vec2::new(0.0, k / h)),
                    ],
                });
            }
        }
        if i >= 1 && i < n - 1 {
            if params.w_kappa > 0.0 {
                let kappa = traj.curvature(i);
                let u = hinge(kappa.abs() - params.kappa_max);
                if u > 0.0 {
                    let k = (params.w_kappa * h * params.alpha_kappa).sqrt();
                    let sign = kappa.signum();
                    let g = kappa_gradients(traj, i);
                    out.push(ResidualEntry {
                        value: k * u,
                        grads: vec![
                            (i - 1, g[0] * (k * sign)),
                            (i, g[1] * (k * sign)),
                            (i + 1, g[2] * (k * sign)),
                        ],
                    });
                }
            }
            if params.w_a > 0.0 {
                let a = traj.acceleration(i);
                let norm = a.norm();
                let u = hinge(norm - params.a_max);
                if u > 0.0 && norm > 1e-12 {
                    let k = (params.w_a * h * params.alpha_a).sqrt();
                    let dn = a / norm;
                    let h2 = h * h;
                    out.push(ResidualEntry {
                        value: k * u,
                        grads: vec![
                            (i - 1, dn * (k / h2)),
                            (i, dn * (-2.0 * k / h2)),
                            (i + 1, dn * (k / h2)),
                        ],
                    });
                }
            }
        }
    }
    Ok(out)
}

/// The four rendered layers over a grid: static (lane + obstacle), moving
/// obstacles at their epoch positions, context (red light + desired-speed
/// shortfall), and the always-zero nonholonomic placeholder.
#[derive(Debug, Clone)]
pub struct CostMapGrid {
    pub static_layer: DistanceField,
    pub moving_layer: DistanceField,
    pub context_layer: DistanceField,
    pub nonholonomic_layer: DistanceField,
}

impl CostMapGrid {
    pub fn layers(&self) -> [(&'static str, &DistanceField); 4] {
        [
            ("static", &self.static_layer),
            ("moving", &self.moving_layer),
            ("context", &self.context_layer),
            ("nonholonomic", &self.nonholonomic_layer),
        ]
    }
}

/// Evaluate the position-dependent cost terms on a grid for inspection.
/// Trajectory-dependent terms (curvature, acceleration) have no positional
/// footprint, so their layer is identically zero.
pub fn render_cost_map(
    ctx: &ContextSnapshot,
    params: &CostParams,
    region: Rect,
    cell_size: f64,
) -> Result<CostMapGrid, FieldError> {
    let mut err = None;
    let static_layer = DistanceField::from_fn(region, cell_size, |p| {
        let lane = lane_cost(ctx, params, p);
        let obst = obstacle_cost(ctx, params, p);
        match (lane, obst) {
            (Ok((a, _)), Ok((b, _))) => a + b,
            (Err(e), _) | (_, Err(e)) => {
                err.get_or_insert(e);
                f64::NAN
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }

    let moving_layer = DistanceField::from_fn(region, cell_size, |p| {
        let mut v = 0.0;
        for (_, mo) in &ctx.mo_predictions {
            let u = hinge(params.tau_o - (p - mo.point(0)).norm());
            v += params.alpha_d * u * u;
        }
        v
    })?;

    let context_layer = DistanceField::from_fn(region, cell_size, |p| {
        let mut v = 0.0;
        if let Some(q) = ctx.red_query(p) {
            if q.distance > 0.0 && q.distance <= params.tau_r {
                let u = params.tau_r - q.distance;
                v += params.alpha_r * u * u;
            }
        }
        // shortfall of the desired speed below the local limit: zero when
        // no slow-down intent is present
        if let Some(limit) = ctx.local_speed_limit(p) {
            let shortfall = limit - ctx.desired_speed.min(limit);
            v += shortfall * shortfall;
        }
        v
    })?;

    let nonholonomic_layer = DistanceField::from_fn(region, cell_size, |_| 0.0)?;

    Ok(CostMapGrid { static_layer, moving_layer, context_layer, nonholonomic_layer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyLabel;
    use crate::scenario::{parse_scenario, StaticObstacle, TrafficLight};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Context with fabricated fields whose values and gradients are known
    /// in closed form: solid field = y, broken field = x, obstacle = y−5.
    fn synthetic_ctx() -> ContextSnapshot {
        let region = Rect::new(Vec2::new(-50.0, -50.0), Vec2::new(50.0, 50.0));
        let fake_ref = ReferenceLine {
            points: vec![Vec2::new(-100.0, 0.0), Vec2::new(100.0, 0.0)],
            policy: PolicyLabel::Forward,
            speed_limit: 10.0,
        };
        ContextSnapshot {
            lane_sdf_solid: DistanceField::from_fn(region, 1.0, |p| p.y).unwrap(),
            lane_sdf_broken: DistanceField::from_fn(region, 1.0, |p| p.x).unwrap(),
            obstacle_sdf: DistanceField::from_fn(region, 1.0, |p| p.y - 5.0).unwrap(),
            red_lights: vec![],
            desired_speed: 5.0,
            reference: fake_ref,
            mo_predictions: vec![],
            lanes: vec![],
        }
    }

    fn straight_traj(n: usize, speed: f64) -> DiscreteTrajectory {
        DiscreteTrajectory::new(
            (0..n).map(|i| Vec2::new(i as f64 * speed * 0.1, 0.0)).collect(),
            0.0,
            0.1,
        )
    }

    #[test]
    fn lane_cost_branch_values() {
        let mut ctx = synthetic_ctx();
        // suppress the broken-boundary part by pushing its field far away
        let region = Rect::new(Vec2::new(-50.0, -50.0), Vec2::new(50.0, 50.0));
        ctx.lane_sdf_broken = DistanceField::from_fn(region, 1.0, |_| 1e6).unwrap();
        let params = CostParams { alpha_g: 1.0, tau_b: 0.5, ..CostParams::default() };
        // beyond the threshold: d = 1.5 > tau_b
        let (v, _) = lane_cost(&ctx, &params, Vec2::new(0.0, 1.5)).unwrap();
        assert_relative_eq!(v, 0.0);
        // exactly on the boundary: d = 0
        let (v, _) = lane_cost(&ctx, &params, Vec2::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(v, 0.25, epsilon = 1e-12);
        // one meter outside: d = −1 → (1 + 0.5)²
        let (v, g) = lane_cost(&ctx, &params, Vec2::new(0.0, -1.0)).unwrap();
        assert_relative_eq!(v, 2.25, epsilon = 1e-12);
        // gradient pushes back toward positive distance
        assert!(g.y < 0.0);
    }

    #[test]
    fn obstacle_cost_branch_values() {
        let ctx = synthetic_ctx(); // obstacle field = y − 5
        let params = CostParams { alpha_g: 1.0, tau_b: 0.5, ..CostParams::default() };
        let (v, _) = obstacle_cost(&ctx, &params, Vec2::new(0.0, 20.0)).unwrap();
        assert_relative_eq!(v, 0.0);
        let (v, _) = obstacle_cost(&ctx, &params, Vec2::new(0.0, 5.0)).unwrap();
        assert_relative_eq!(v, 0.25, epsilon = 1e-12);
        let (v, _) = obstacle_cost(&ctx, &params, Vec2::new(0.0, 4.5)).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn moving_obstacle_cost_examples() {
        let mut ctx = synthetic_ctx();
        let params = CostParams { alpha_d: 1.0, tau_o: 5.0, ..CostParams::default() };
        let traj = straight_traj(6, 5.0);
        // far agent: zero
        ctx.mo_predictions = vec![(
            7,
            DiscreteTrajectory::new(
                (0..6).map(|i| Vec2::new(i as f64 * 0.5, 6.0)).collect(),
                0.0,
                0.1,
            ),
        )];
        assert_relative_eq!(moving_obstacle_cost(&ctx, &params, &traj, 0).0, 0.0);
        // coincident agent: (0 − τ)²
        ctx.mo_predictions = vec![(7, straight_traj(6, 5.0))];
        assert_relative_eq!(moving_obstacle_cost(&ctx, &params, &traj, 2).0, 25.0);
        // two agents at τ/2 each
        ctx.mo_predictions = vec![
            (
                7,
                DiscreteTrajectory::new(
                    (0..6).map(|i| Vec2::new(i as f64 * 0.5, 2.5)).collect(),
                    0.0,
                    0.1,
                ),
            ),
            (
                8,
                DiscreteTrajectory::new(
                    (0..6).map(|i| Vec2::new(i as f64 * 0.5, -2.5)).collect(),
                    0.0,
                    0.1,
                ),
            ),
        ];
        let p0 = traj.point(0);
        let d7 = (p0 - ctx.mo_predictions[0].1.point(0)).norm();
        assert_relative_eq!(d7, 2.5);
        assert_relative_eq!(
            moving_obstacle_cost(&ctx, &params, &traj, 0).0,
            2.0 * 2.5 * 2.5,
            epsilon = 1e-12
        );
    }

    fn ctx_with_red_light() -> ContextSnapshot {
        let mut ctx = synthetic_ctx();
        ctx.red_lights = vec![ResolvedRedLight {
            stop_line: (Vec2::new(20.0, -10.0), Vec2::new(20.0, 10.0)),
            approach: Vec2::new(1.0, 0.0),
        }];
        ctx
    }

    #[test]
    fn red_light_cost_examples() {
        let ctx = ctx_with_red_light();
        let params = CostParams { alpha_r: 1.0, tau_r: 20.0, ..CostParams::default() };
        // stationary vehicle right before the light: velocity factor zero
        let stopped = DiscreteTrajectory::new(vec![Vec2::new(15.0, 0.0); 6], 0.0, 0.1);
        assert_relative_eq!(red_light_cost(&ctx, &params, &stopped, 0).0, 0.0);
        // no red light resolved: zero
        let ctx_green = synthetic_ctx();
        let moving = DiscreteTrajectory::new(
            (0..6).map(|i| Vec2::new(10.0 + i as f64, 0.0)).collect(),
            0.0,
            0.1,
        );
        assert_relative_eq!(red_light_cost(&ctx_green, &params, &moving, 0).0, 0.0);
        // d_r = τ_r/2, speed 10 straight at the line → (10)²·(10)²
        let at_speed = DiscreteTrajectory::new(
            (0..6).map(|i| Vec2::new(10.0 + i as f64, 0.0)).collect(),
            0.0,
            0.1,
        );
        assert_relative_eq!(red_light_cost(&ctx, &params, &at_speed, 0).0, 1e4, epsilon = 1e-9);
        // moving away from the line: free
        let away = DiscreteTrajectory::new(
            (0..6).map(|i| Vec2::new(10.0 - i as f64, 0.0)).collect(),
            0.0,
            0.1,
        );
        assert_relative_eq!(red_light_cost(&ctx, &params, &away, 0).0, 0.0);
    }

    #[test]
    fn speed_cost_examples() {
        let ctx = synthetic_ctx(); // desired speed 5 along +x
        let params = CostParams::default();
        let matched = straight_traj(6, 5.0);
        assert!(speed_cost(&ctx, &params, &matched, 0).0 < 1e-12);
        let stopped = DiscreteTrajectory::new(vec![Vec2::new(0.0, 0.0); 6], 0.0, 0.1);
        assert_relative_eq!(speed_cost(&ctx, &params, &stopped, 0).0, 25.0, epsilon = 1e-12);
        // traffic jam: desired speed zero → cost is the squared speed
        let mut jam = synthetic_ctx();
        jam.desired_speed = 0.0;
        let v8 = straight_traj(6, 8.0);
        assert_relative_eq!(speed_cost(&jam, &params, &v8, 0).0, 64.0, epsilon = 1e-9);
    }

    #[test]
    fn curvature_cost_examples() {
        let params = CostParams { alpha_kappa: 1.0, kappa_max: 0.2, ..CostParams::default() };
        let straight = straight_traj(6, 5.0);
        assert_relative_eq!(curvature_cost(&params, &straight, 2).0, 0.0);
        // craft a stencil with discrete κ exactly 2·κ_max = 0.4:
        // v = (10,0), need κ = v×a/|v|³ = a_y/100 = 0.4 → a_y = 40
        let traj = DiscreteTrajectory::new(
            vec![
                Vec2::new(-1.0, 0.4),
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(2.0, 0.0),
            ],
            0.0,
            0.1,
        );
        let kappa = traj.curvature(1);
        assert_relative_eq!(kappa, 0.4, epsilon = 1e-12);
        assert_relative_eq!(curvature_cost(&params, &traj, 1).0, 0.04, epsilon = 1e-12);
        // boundary: |κ| = κ_max exactly → 0
        let traj = DiscreteTrajectory::new(
            vec![
                Vec2::new(-1.0, 0.2),
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(2.0, 0.0),
            ],
            0.0,
            0.1,
        );
        assert_relative_eq!(traj.curvature(1), 0.2, epsilon = 1e-12);
        assert_relative_eq!(curvature_cost(&params, &traj, 1).0, 0.0);
    }

    #[test]
    fn acceleration_cost_examples() {
        let params = CostParams { alpha_a: 1.0, a_max: 4.0, ..CostParams::default() };
        let straight = straight_traj(6, 5.0);
        assert_relative_eq!(acceleration_cost(&params, &straight, 2).0, 0.0);
        // craft ‖a‖ = a_max exactly: a = (x2 − 2x1 + x0)/h² = (0, 4)
        let mk = |ay: f64| {
            DiscreteTrajectory::new(
                vec![
                    Vec2::new(-1.0, ay * 0.01),
                    Vec2::new(0.0, 0.0),
                    Vec2::new(1.0, 0.0),
                    Vec2::new(2.0, 0.0),
                ],
                0.0,
                0.1,
            )
        };
        assert_relative_eq!(acceleration_cost(&params, &mk(4.0), 1).0, 0.0);
        assert_relative_eq!(acceleration_cost(&params, &mk(6.0), 1).0, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn total_cost_zero_weights_and_linearity() {
        let ctx = ctx_with_red_light();
        let traj = straight_traj(8, 4.0);
        let zero = CostParams {
            w_g: 0.0,
            w_s: 0.0,
            w_d: 0.0,
            w_r: 0.0,
            w_v: 0.0,
            w_kappa: 0.0,
            w_a: 0.0,
            ..CostParams::default()
        };
        let (j, b) = total_cost(&ctx, &zero, &traj).unwrap();
        assert_eq!(j, 0.0);
        assert_eq!(b, CostBreakdown::default());
        // single active term equals the independent sum × weight × h
        let only_v = CostParams { w_v: 3.0, ..zero.clone() };
        let (j, b) = total_cost(&ctx, &only_v, &traj).unwrap();
        let mut manual = 0.0;
        for i in 0..traj.len() - 1 {
            manual += 3.0 * 0.1 * speed_cost(&ctx, &only_v, &traj, i).0;
        }
        assert_relative_eq!(j, manual, max_relative = 1e-12);
        assert_relative_eq!(b.speed, manual, max_relative = 1e-12);
    }

    #[test]
    fn total_cost_matches_a_resummation_of_all_terms() {
        let ctx = random_scenario_ctx(3, 12);
        let params = CostParams::default();
        let traj = random_traj(&mut ChaCha8Rng::seed_from_u64(5), 12);
        let (j, b) = total_cost(&ctx, &params, &traj).unwrap();
        let n = traj.len();
        let h = traj.h();
        let mut manual = 0.0;
        for i in 0..n {
            manual += params.w_g * h * lane_cost(&ctx, &params, traj.point(i)).unwrap().0;
            manual += params.w_s * h * obstacle_cost(&ctx, &params, traj.point(i)).unwrap().0;
            manual += params.w_d * h * moving_obstacle_cost(&ctx, &params, &traj, i).0;
            if i < n - 1 {
                manual += params.w_r * h * red_light_cost(&ctx, &params, &traj, i).0;
                manual += params.w_v * h * speed_cost(&ctx, &params, &traj, i).0;
            }
            if i >= 1 && i < n - 1 {
                manual += params.w_kappa * h * curvature_cost(&params, &traj, i).0;
                manual += params.w_a * h * acceleration_cost(&params, &traj, i).0;
            }
        }
        assert_relative_eq!(j, manual, max_relative = 1e-10);
        assert_relative_eq!(j, b.total(), max_relative = 1e-12);
    }

    #[test]
    fn total_cost_invariant_under_agent_reordering() {
        let mut ctx = random_scenario_ctx(3, 12);
        let params = CostParams::default();
        let traj = random_traj(&mut ChaCha8Rng::seed_from_u64(9), 12);
        let (j1, _) = total_cost(&ctx, &params, &traj).unwrap();
        ctx.mo_predictions.reverse();
        ctx.mo_predictions.sort_by_key(|(id, _)| *id);
        let (j2, _) = total_cost(&ctx, &params, &traj).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn continuity_at_thresholds() {
        let mut ctx = synthetic_ctx();
        let region = Rect::new(Vec2::new(-50.0, -50.0), Vec2::new(50.0, 50.0));
        ctx.lane_sdf_broken = DistanceField::from_fn(region, 1.0, |_| 1e6).unwrap();
        let params = CostParams::default();
        // straddle d = tau_b on the solid field (value = y)
        let eps = 1e-9;
        let (below, _) = lane_cost(&ctx, &params, Vec2::new(0.0, params.tau_b - eps)).unwrap();
        let (above, _) = lane_cost(&ctx, &params, Vec2::new(0.0, params.tau_b + eps)).unwrap();
        assert!(below < 1e-12 && above == 0.0, "below {below}, above {above}");
    }

    // ---------------------------------------------------------------
    // finite-difference gradient checks
    // ---------------------------------------------------------------

    /// Context over a real scenario: a straight 4 m lane with a broken
    /// left boundary, an obstacle block, a red light, and two agents.
    /// Moving-obstacle predictions have `len` points to match the
    /// trajectory under test.
    fn random_scenario_ctx(n_pred: usize, len: usize) -> ContextSnapshot {
        let scenario = parse_scenario(
            r#"{
            "frame_period": 0.1,
            "player_id": 0,
            "lanes": [{
                "id": 0, "width": 4.0, "speed_limit": 12.0,
                "left_boundary": "broken", "right_boundary": "solid",
                "centerline": [-40.0, 0.0, 80.0, 0.0],
                "successors": []
            }],
            "agents": [{
                "id": 0, "kind": "vehicle",
                "track": [[0.0, 0.0, 0.0, 0.0, 5.0], [8.0, 40.0, 0.0, 0.0, 5.0]]
            }]
        }"#,
        )
        .unwrap();
        let mut scenario = scenario;
        scenario.obstacles.push(StaticObstacle {
            polygon: vec![
                Vec2::new(18.0, 3.0),
                Vec2::new(25.0, 3.0),
                Vec2::new(25.0, 9.0),
                Vec2::new(18.0, 9.0),
            ],
        });
        scenario.lights.push(TrafficLight {
            stop_line: (Vec2::new(30.0, -20.0), Vec2::new(30.0, 20.0)),
            approach: Vec2::new(1.0, 0.0),
            schedule: vec![(0.0, LightState::Red)],
        });
        let region = Rect::new(Vec2::new(-30.0, -25.0), Vec2::new(60.0, 25.0));
        let reference = ReferenceLine {
            points: (0..=90).map(|i| Vec2::new(-30.0 + i as f64, 0.0)).collect(),
            policy: PolicyLabel::Forward,
            speed_limit: 12.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mo = (0..n_pred)
            .map(|k| {
                let y = rng.gen_range(-6.0..6.0);
                let x0 = rng.gen_range(-5.0..25.0);
                let v = rng.gen_range(0.0..6.0);
                (
                    10 + k as i64,
                    DiscreteTrajectory::new(
                        (0..len).map(|i| Vec2::new(x0 + v * 0.1 * i as f64, y)).collect(),
                        0.0,
                        0.1,
                    ),
                )
            })
            .collect();
        ContextSnapshot::build(&scenario, region, 1.0, 0.0, reference, 6.0, mo).unwrap()
    }

    fn random_traj(rng: &mut ChaCha8Rng, n: usize) -> DiscreteTrajectory {
        let x0 = rng.gen_range(-10.0..20.0);
        let y0 = rng.gen_range(-6.0..6.0);
        let vx = rng.gen_range(2.0..10.0);
        let vy = rng.gen_range(-2.0..2.0);
        let points = (0..n)
            .map(|i| {
                let t = i as f64 * 0.1;
                Vec2::new(
                    x0 + vx * t + rng.gen_range(-0.08..0.08),
                    y0 + vy * t + rng.gen_range(-0.08..0.08),
                )
            })
            .collect();
        DiscreteTrajectory::new(points, 0.0, 0.1)
    }

    /// Nudge one coordinate of one point and re-evaluate a scalar.
    fn fd_gradient<F: Fn(&DiscreteTrajectory) -> f64>(
        traj: &DiscreteTrajectory,
        idx: usize,
        f: F,
    ) -> Vec2 {
        let eps = 1e-6;
        let mut t = traj.clone();
        let p = traj.point(idx);
        t.set_point(idx, Vec2::new(p.x + eps, p.y));
        let fxp = f(&t);
        t.set_point(idx, Vec2::new(p.x - eps, p.y));
        let fxm = f(&t);
        t.set_point(idx, Vec2::new(p.x, p.y + eps));
        let fyp = f(&t);
        t.set_point(idx, Vec2::new(p.x, p.y - eps));
        let fym = f(&t);
        Vec2::new((fxp - fxm) / (2.0 * eps), (fyp - fym) / (2.0 * eps))
    }

    fn check_rel(analytic: Vec2, fd: Vec2, scale: f64, what: &str) {
        let err = (analytic - fd).norm() / fd.norm().max(scale);
        assert!(err < 1e-4, "{what}: analytic {analytic:?} vs fd {fd:?} (rel {err})");
    }

    #[test]
    fn gradients_match_finite_differences_on_random_configurations() {
        let ctx = random_scenario_ctx(3, 8);
        let params = CostParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut checked = 0;
        while checked < 200 {
            let traj = random_traj(&mut rng, 8);
            let i = rng.gen_range(1..7usize);
            // keep SDF probes off cell edges where bilinear kinks
            let p = traj.point(i);
            let fx = (p.x - ctx.lane_sdf_solid.origin().x).fract().abs();
            let fy = (p.y - ctx.lane_sdf_solid.origin().y).fract().abs();
            if !(0.05..0.95).contains(&fx) || !(0.05..0.95).contains(&fy) {
                continue;
            }

            let (_, g) = lane_cost(&ctx, &params, p).unwrap();
            let fd = fd_gradient(&traj, i, |t| lane_cost(&ctx, &params, t.point(i)).unwrap().0);
            check_rel(g, fd, 1e-6, "lane");

            let (_, g) = obstacle_cost(&ctx, &params, p).unwrap();
            let fd =
                fd_gradient(&traj, i, |t| obstacle_cost(&ctx, &params, t.point(i)).unwrap().0);
            check_rel(g, fd, 1e-6, "obstacle");

            let (_, g) = moving_obstacle_cost(&ctx, &params, &traj, i);
            let fd = fd_gradient(&traj, i, |t| moving_obstacle_cost(&ctx, &params, t, i).0);
            check_rel(g, fd, 1e-6, "moving obstacle");

            if i < 7 {
                let (_, gi, gn) = red_light_cost(&ctx, &params, &traj, i);
                let fd_i = fd_gradient(&traj, i, |t| red_light_cost(&ctx, &params, t, i).0);
                let fd_n = fd_gradient(&traj, i + 1, |t| red_light_cost(&ctx, &params, t, i).0);
                check_rel(gi, fd_i, 1e-4, "red light (i)");
                check_rel(gn, fd_n, 1e-4, "red light (i+1)");

                let (_, gi, gn) = speed_cost(&ctx, &params, &traj, i);
                let fd_i = fd_gradient(&traj, i, |t| speed_cost(&ctx, &params, t, i).0);
                let fd_n = fd_gradient(&traj, i + 1, |t| speed_cost(&ctx, &params, t, i).0);
                check_rel(gi, fd_i, 1e-6, "speed (i)");
                check_rel(gn, fd_n, 1e-6, "speed (i+1)");
            }

            if i < 7 {
                let (_, gk) = {
                    let (v, g) = curvature_cost(&params, &traj, i);
                    (v, g)
                };
                for (off, ga) in gk.iter().enumerate() {
                    let fd =
                        fd_gradient(&traj, i - 1 + off, |t| curvature_cost(&params, t, i).0);
                    check_rel(*ga, fd, 1e-6, "curvature");
                }

                let (_, gacc) = acceleration_cost(&params, &traj, i);
                for (off, ga) in gacc.iter().enumerate() {
                    let fd =
                        fd_gradient(&traj, i - 1 + off, |t| acceleration_cost(&params, t, i).0);
                    check_rel(*ga, fd, 1e-6, "acceleration");
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn residual_entries_reproduce_the_total_cost() {
        let ctx = random_scenario_ctx(2, 10);
        let params = CostParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let traj = random_traj(&mut rng, 10);
            let (j, _) = total_cost(&ctx, &params, &traj).unwrap();
            let entries = residual_entries(&ctx, &params, &traj).unwrap();
            let j_res: f64 = entries.iter().map(|e| e.value * e.value).sum();
            assert_relative_eq!(j, j_res, max_relative = 1e-10);
        }
    }

    #[test]
    fn residual_gradients_match_finite_differences() {
        let ctx = random_scenario_ctx(2, 8);
        let params = CostParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let mut checked = 0;
        while checked < 30 {
            let traj = random_traj(&mut rng, 8);
            let p = traj.point(3);
            let fx = (p.x - ctx.lane_sdf_solid.origin().x).fract().abs();
            let fy = (p.y - ctx.lane_sdf_solid.origin().y).fract().abs();
            if !(0.05..0.95).contains(&fx) || !(0.05..0.95).contains(&fy) {
                continue;
            }
            // gradient of J = Σ r² via entries must match FD of total_cost
            let entries = residual_entries(&ctx, &params, &traj).unwrap();
            let mut grad = vec![Vec2::ZERO; traj.len()];
            for e in &entries {
                for (idx, g) in &e.grads {
                    grad[*idx] += *g * (2.0 * e.value);
                }
            }
            for idx in [1usize, 3, 6] {
                let fd = fd_gradient(&traj, idx, |t| {
                    total_cost(&ctx, &params, t).unwrap().0
                });
                let err = (grad[idx] - fd).norm() / fd.norm().max(1e-3);
                assert!(err < 1e-3, "point {idx}: {:?} vs {fd:?}", grad[idx]);
            }
            checked += 1;
        }
    }

    #[test]
    fn render_layers_empty_scenario() {
        let scenario = parse_scenario(
            r#"{
            "frame_period": 0.1,
            "player_id": 0,
            "lanes": [{
                "id": 0, "width": 4.0, "speed_limit": 10.0,
                "left_boundary": "solid", "right_boundary": "solid",
                "centerline": [-40.0, 0.0, 60.0, 0.0],
                "successors": []
            }],
            "agents": [{
                "id": 0, "kind": "vehicle",
                "track": [[0.0, 0.0, 0.0, 0.0, 5.0], [1.0, 5.0, 0.0, 0.0, 5.0]]
            }]
        }"#,
        )
        .unwrap();
        let region = Rect::new(Vec2::new(-20.0, -12.0), Vec2::new(40.0, 12.0));
        let reference = ReferenceLine {
            points: vec![Vec2::new(-20.0, 0.0), Vec2::new(40.0, 0.0)],
            policy: PolicyLabel::Forward,
            speed_limit: 10.0,
        };
        let ctx =
            ContextSnapshot::build(&scenario, region, 1.0, 0.0, reference, f64::INFINITY, vec![])
                .unwrap();
        let params = CostParams::default();
        let inner = Rect::new(Vec2::new(-18.0, -10.0), Vec2::new(38.0, 10.0));
        let map = render_cost_map(&ctx, &params, inner, 1.0).unwrap();
        for r in 0..map.moving_layer.rows() {
            for c in 0..map.moving_layer.cols() {
                assert_eq!(map.moving_layer.node_value(r, c), 0.0);
                assert_eq!(map.context_layer.node_value(r, c), 0.0);
                assert_eq!(map.nonholonomic_layer.node_value(r, c), 0.0);
            }
        }
        // static layer: nonzero outside the corridor, zero well inside
        let (inside, _) = map.static_layer.sample(Vec2::new(0.0, 0.0)).unwrap();
        assert_eq!(inside, 0.0);
        let (outside, _) = map.static_layer.sample(Vec2::new(0.0, 6.0)).unwrap();
        assert!(outside > 0.0);
    }

    #[test]
    fn render_red_light_band_and_translation_invariance() {
        let build = |shift: f64| {
            let scenario = parse_scenario(&format!(
                r#"{{
                "frame_period": 0.1,
                "player_id": 0,
                "lanes": [{{
                    "id": 0, "width": 4.0, "speed_limit": 10.0,
                    "left_boundary": "solid", "right_boundary": "solid",
                    "centerline": [{}, 0.0, {}, 0.0],
                    "successors": []
                }}],
                "lights": [{{
                    "stop_line": [{}, -6.0, {}, 6.0],
                    "approach": [1.0, 0.0],
                    "schedule": [{{"t": 0.0, "state": "red"}}]
                }}],
                "obstacles": [{{"polygon": [{}, 1.0, {}, 1.0, {}, 5.0]}}],
                "agents": [{{
                    "id": 0, "kind": "vehicle",
                    "track": [[0.0, {}, 0.0, 0.0, 5.0], [1.0, {}, 0.0, 0.0, 5.0]]
                }}]
            }}"#,
                -40.0 + shift,
                60.0 + shift,
                20.0 + shift,
                20.0 + shift,
                5.0 + shift,
                10.0 + shift,
                7.5 + shift,
                shift,
                5.0 + shift
            ))
            .unwrap();
            let region =
                Rect::new(Vec2::new(-20.0 + shift, -12.0), Vec2::new(40.0 + shift, 12.0));
            let reference = ReferenceLine {
                points: vec![Vec2::new(-20.0 + shift, 0.0), Vec2::new(40.0 + shift, 0.0)],
                policy: PolicyLabel::Forward,
                speed_limit: 10.0,
            };
            let ctx = ContextSnapshot::build(
                &scenario,
                region,
                1.0,
                0.0,
                reference,
                f64::INFINITY,
                vec![],
            )
            .unwrap();
            let inner = Rect::new(Vec2::new(-18.0 + shift, -10.0), Vec2::new(38.0 + shift, 10.0));
            render_cost_map(&ctx, &CostParams::default(), inner, 1.0).unwrap()
        };
        let a = build(0.0);
        // context layer lights up before the stop line, not after
        let (before, _) = a.context_layer.sample(Vec2::new(15.0, 0.0)).unwrap();
        let (after, _) = a.context_layer.sample(Vec2::new(25.0, 0.0)).unwrap();
        assert!(before > 0.0 && after == 0.0, "before {before}, after {after}");
        // static layer nonzero at the construction block
        let (at_block, _) = a.static_layer.sample(Vec2::new(7.5, 2.5)).unwrap();
        assert!(at_block > 0.0);
        // translating scenario + region by an integer number of cells
        // leaves the grids unchanged
        let b = build(7.0);
        for (la, lb) in a.layers().iter().zip(b.layers().iter()) {
            let sum_a: f64 =
                (0..la.1.rows()).flat_map(|r| (0..la.1.cols()).map(move |c| (r, c)))
                    .map(|(r, c)| la.1.node_value(r, c))
                    .sum();
            let sum_b: f64 =
                (0..lb.1.rows()).flat_map(|r| (0..lb.1.cols()).map(move |c| (r, c)))
                    .map(|(r, c)| lb.1.node_value(r, c))
                    .sum();
            assert_relative_eq!(sum_a, sum_b, max_relative = 1e-9);
        }
    }

    #[test]
    fn params_validate_rejects_bad_values() {
        let mut p = CostParams::default();
        assert!(p.validate().is_ok());
        p.tau_r = 0.0;
        assert!(p.validate().is_err());
        let mut p = CostParams::default();
        p.w_v = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let p = CostParams::default();
        let text = serde_json::to_string_pretty(&p).unwrap();
        let back: CostParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
