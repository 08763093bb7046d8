//! Grid-backed signed distance fields over the scenario.
//!
//! Two kinds are built: a bi-directional field to lane boundaries
//! (positive inside the drivable corridors, negative outside, so
//! out-of-bounds points still receive an inward-pointing gradient) and a
//! field to static obstacles (positive outside, negative inside). Node
//! values are exact point-to-segment distances; grids are desk scale, so
//! brute force over all boundary segments is fine.

use crate::geometry::{dist_point_segment, dist_to_polygon_boundary, point_in_polygon, Rect, Vec2};
use crate::scenario::{BoundaryKind, Scenario};
use std::fmt::Write as _;
use thiserror::Error;

/// Stand-in for "no boundary anywhere": far enough that every cost term
/// is identically zero beyond its threshold.
pub const FAR_DISTANCE: f64 = 1.0e6;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("scenario has no lanes; cannot build a lane distance field")]
    EmptyLaneSet,
    #[error("degenerate region: {0:?}")]
    DegenerateRegion(Rect),
    #[error("cell size must be > 0, got {0}")]
    BadCellSize(f64),
    #[error("point ({0}, {1}) outside the field hull")]
    OutOfHull(f64, f64),
}

/// Regular grid of signed distances with bilinear interpolation.
#[derive(Debug, Clone)]
pub struct DistanceField {
    origin: Vec2,
    cell_size: f64,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn from_fn<F: FnMut(Vec2) -> f64>(
        region: Rect,
        cell_size: f64,
        mut f: F,
    ) -> Result<DistanceField, FieldError> {
        if region.is_degenerate() {
            return Err(FieldError::DegenerateRegion(region));
        }
        if !(cell_size > 0.0) {
            return Err(FieldError::BadCellSize(cell_size));
        }
        let cols = (region.width() / cell_size).ceil() as usize + 1;
        let rows = (region.height() / cell_size).ceil() as usize + 1;
        let origin = region.min;
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let p = origin + Vec2::new(c as f64 * cell_size, r as f64 * cell_size);
                values.push(f(p));
            }
        }
        Ok(DistanceField { origin, cell_size, rows, cols, values })
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn node_value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn node_position(&self, row: usize, col: usize) -> Vec2 {
        self.origin + Vec2::new(col as f64 * self.cell_size, row as f64 * self.cell_size)
    }

    pub fn hull(&self) -> Rect {
        Rect::new(
            self.origin,
            self.origin
                + Vec2::new(
                    (self.cols - 1) as f64 * self.cell_size,
                    (self.rows - 1) as f64 * self.cell_size,
                ),
        )
    }

    /// Bilinear value and the analytic gradient of the interpolant.
    pub fn sample(&self, p: Vec2) -> Result<(f64, Vec2), FieldError> {
        let hull = self.hull();
        if !hull.contains(p) {
            return Err(FieldError::OutOfHull(p.x, p.y));
        }
        let gx = (p.x - self.origin.x) / self.cell_size;
        let gy = (p.y - self.origin.y) / self.cell_size;
        let c = (gx.floor() as usize).min(self.cols - 2);
        let r = (gy.floor() as usize).min(self.rows - 2);
        let fx = gx - c as f64;
        let fy = gy - r as f64;
        let v00 = self.node_value(r, c);
        let v10 = self.node_value(r, c + 1);
        let v01 = self.node_value(r + 1, c);
        let v11 = self.node_value(r + 1, c + 1);
        let value = v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy;
        let grad = Vec2::new(
            ((v10 - v00) * (1.0 - fy) + (v11 - v01) * fy) / self.cell_size,
            ((v01 - v00) * (1.0 - fx) + (v11 - v10) * fx) / self.cell_size,
        );
        Ok((value, grad))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# origin_x={},origin_y={},cell_size={},rows={},cols={}",
            self.origin.x, self.origin.y, self.cell_size, self.rows, self.cols
        );
        for r in 0..self.rows {
            let row: Vec<String> =
                (0..self.cols).map(|c| format!("{}", self.node_value(r, c))).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Offset a polyline laterally; positive offsets go to the left of the
/// travel direction. Vertex normals are averaged (miter joins, clamped).
pub fn offset_polyline(points: &[Vec2], offset: f64) -> Vec<Vec2> {
    let n = points.len();
    assert!(n >= 2);
    let seg_normal = |i: usize| (points[i + 1] - points[i]).normalized().left_normal();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let normal = if i == 0 {
            seg_normal(0)
        } else if i == n - 1 {
            seg_normal(n - 2)
        } else {
            let a = seg_normal(i - 1);
            let b = seg_normal(i);
            let avg = (a + b).normalized();
            // miter join; the clamp keeps sharp corners from spiking
            let cos_half = avg.dot(b).max(1.0 / 3.0);
            avg / cos_half
        };
        out.push(points[i] + normal * offset);
    }
    out
}

fn lane_boundary_segments(scenario: &Scenario, kind: BoundaryKind) -> Vec<(Vec2, Vec2)> {
    let mut segs = Vec::new();
    for lane in &scenario.lanes {
        let half = lane.width / 2.0;
        if lane.left_boundary == kind {
            let b = offset_polyline(&lane.centerline, half);
            segs.extend(b.windows(2).map(|w| (w[0], w[1])));
        }
        if lane.right_boundary == kind {
            let b = offset_polyline(&lane.centerline, -half);
            segs.extend(b.windows(2).map(|w| (w[0], w[1])));
        }
    }
    segs
}

fn min_dist_to_segments(segs: &[(Vec2, Vec2)], p: Vec2) -> f64 {
    segs.iter().map(|&(a, b)| dist_point_segment(a, b, p)).fold(f64::INFINITY, f64::min)
}

/// True when p lies inside some lane corridor (centerline dilated by
/// width/2). This is the exact membership oracle the signed field encodes.
pub fn inside_any_corridor(scenario: &Scenario, p: Vec2) -> bool {
    scenario.lanes.iter().any(|lane| {
        let mut best = f64::INFINITY;
        for w in lane.centerline.windows(2) {
            best = best.min(dist_point_segment(w[0], w[1], p));
        }
        best <= lane.width / 2.0
    })
}

/// Bi-directional signed distance to lane boundaries of the given kind:
/// positive inside the union of drivable corridors, negative outside.
/// With no boundary of that kind anywhere, every value is +FAR_DISTANCE.
pub fn build_lane_sdf(
    scenario: &Scenario,
    region: Rect,
    cell_size: f64,
    kind: BoundaryKind,
) -> Result<DistanceField, FieldError> {
    if scenario.lanes.is_empty() {
        return Err(FieldError::EmptyLaneSet);
    }
    let segs = lane_boundary_segments(scenario, kind);
    DistanceField::from_fn(region, cell_size, |p| {
        if segs.is_empty() {
            return FAR_DISTANCE;
        }
        let d = min_dist_to_segments(&segs, p).min(FAR_DISTANCE);
        if inside_any_corridor(scenario, p) {
            d
        } else {
            -d
        }
    })
}

/// Signed distance to static obstacles: positive outside every polygon,
/// negative inside. With no obstacles, every value is +FAR_DISTANCE.
pub fn build_obstacle_sdf(
    scenario: &Scenario,
    region: Rect,
    cell_size: f64,
) -> Result<DistanceField, FieldError> {
    DistanceField::from_fn(region, cell_size, |p| {
        if scenario.obstacles.is_empty() {
            return FAR_DISTANCE;
        }
        let mut d = f64::INFINITY;
        let mut inside = false;
        for ob in &scenario.obstacles {
            d = d.min(dist_to_polygon_boundary(&ob.polygon, p));
            inside = inside || point_in_polygon(&ob.polygon, p);
        }
        let d = d.min(FAR_DISTANCE);
        if inside {
            -d
        } else {
            d
        }
    })
}
