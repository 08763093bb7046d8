//! Two-level vehicle trajectory prediction: a recurrent maneuver
//! classifier proposes a driving policy, a lane-graph interpreter turns it
//! into a reference-line initial guess, and a damped Gauss–Newton solver
//! refines the trajectory against lane, obstacle, traffic-light, speed,
//! and feasibility costs.

pub mod baselines;
pub mod cost;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod interpreter;
pub mod lanes;
pub mod policy;
pub mod predictor;
pub mod scenario;
pub mod sdf;
pub mod simulator;
pub mod solver;
pub mod trajectory;

pub use geometry::Vec2;
pub use scenario::Scenario;
pub use trajectory::DiscreteTrajectory;
