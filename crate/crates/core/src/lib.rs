//! Singular initial and boundary value problems for quasi-linear ODEs.
//!
//! A singular problem `g(x) u'' = f(x, u, u')` with `g(y) = 0` at the initial
//! point is rewritten as an autonomous vector field in an auxiliary parameter
//! `s`. The singular initial point becomes a stationary point of that field,
//! and the prolonged graph of the sought solution is its one-dimensional
//! unstable manifold. Computing the manifold numerically is a regular
//! integration problem started from a point displaced along the unstable
//! eigenvector.
//!
//! Modules:
//!
//! * [`integrator`]: adaptive Fehlberg 4(5) integration with dense output and events.
//! * [`geometry`]: desingularized fields, impasse classification, unstable seeds.
//! * [`solvers`]: Steffensen, bisection, Newton, and shooting drivers.
//! * [`lane_emden`]: generalised Lane–Emden models and their experiment suites.
//! * [`thomas_fermi`]: the Thomas–Fermi equation through the Majorana reduction.
//! * [`exec`]: data-parallel map used by the sweeps (rayon or sequential).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod geometry;
pub mod integrator;
pub mod lane_emden;
pub mod solvers;
pub mod thomas_fermi;

pub use error::{Error, Result};
pub use integrator::{AutonomousField, Direction, EventSpec, StepControl, Trajectory};
