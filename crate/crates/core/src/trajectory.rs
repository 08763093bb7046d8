//! Discrete trajectory representation and its finite-difference calculus.
//!
//! A trajectory is N rear-axle points sampled at equidistant times
//! t0 + i*h. Velocity uses a forward difference, acceleration a central
//! second difference, and curvature combines the two, so every derived
//! quantity touches at most three consecutive points.

use crate::geometry::Vec2;
use std::fmt::Write as _;

/// Curvature is reported as zero below this speed; it is ill-defined at
/// standstill and a stopped vehicle must not incur feasibility cost.
pub const EPS_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    points: Vec<Vec2>,
    t0: f64,
    h: f64,
}

impl DiscreteTrajectory {
    pub fn new(points: Vec<Vec2>, t0: f64, h: f64) -> Self {
        assert!(points.len() >= 4, "trajectory needs N >= 4 points");
        assert!(h > 0.0, "sampling step must be positive");
        DiscreteTrajectory { points, t0, h }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: N >= 4
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn point(&self, i: usize) -> Vec2 {
        self.points[i]
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn set_point(&mut self, i: usize, p: Vec2) {
        self.points[i] = p;
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    /// Forward difference (x_{i+1} - x_i)/h, defined for 0 <= i < N-1.
    pub fn velocity(&self, i: usize) -> Vec2 {
        assert!(i + 1 < self.points.len(), "velocity index {i} out of range");
        (self.points[i + 1] - self.points[i]) / self.h
    }

    /// Central second difference (x_{i+1} - 2 x_i + x_{i-1})/h^2,
    /// defined for 1 <= i < N-1.
    pub fn acceleration(&self, i: usize) -> Vec2 {
        assert!(i >= 1 && i + 1 < self.points.len(), "acceleration index {i} out of range");
        (self.points[i + 1] - self.points[i] * 2.0 + self.points[i - 1]) / (self.h * self.h)
    }

    /// Signed curvature from the finite differences above; zero below
    /// EPS_SPEED. Defined for 1 <= i < N-1.
    pub fn curvature(&self, i: usize) -> f64 {
        let v = self.velocity(i);
        let speed = v.norm();
        if speed < EPS_SPEED {
            return 0.0;
        }
        let a = self.acceleration(i);
        v.cross(a) / speed.powi(3)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y\n");
        for (i, p) in self.points.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.time(i), p.x, p.y);
        }
        out
    }
}
