//! Path-anchored output-tracking model predictive control for non-holonomic
//! mobile robots moving among convex polytope obstacles.
//!
//! The controller solves, at every sampling instant, a finite-horizon optimal
//! control problem whose terminal state is an artificial steady state tied to
//! a reference path through a progress variable `s ∈ [0, 1]`. A quartic stage
//! cost and a quadratic offset cost on `1 - s` drive the robot along the path
//! to its end without requiring the prediction to track the path closely.
//!
//! Layout:
//!
//! * [`dynamics`]: discrete-time robot models (differential drive + RK4).
//! * [`geometry`]: convex polytopes and the dual collision certificate.
//! * [`path`]: reference paths and their steady-state lift.
//! * [`ocp`]: transcription of the optimal control problem into an NLP.
//! * [`nlp`]: augmented-Lagrangian solver with a projected L-BFGS inner loop.
//! * [`mpc`]: closed-loop controller, warm starts and runtime monitors.
//! * [`planner`]: RRT* global planner.
//! * [`sim`]: closed-loop simulation, sweeps and the Lie-bracket experiment.
//! * [`scenario`]: scenario file format.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod mpc;
pub mod nlp;
pub mod ocp;
pub mod path;
pub mod planner;
pub mod scenario;
pub mod sim;

mod clock;

pub use error::{Error, Result};
