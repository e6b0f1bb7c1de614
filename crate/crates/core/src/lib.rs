//! Transient simulation of semi-explicit differential-algebraic models.
//!
//! The crate discretizes `ẋ = f(x, y, t)`, `0 = g(x, y, t)` with implicit
//! integrators that use either the first derivative of the differential
//! states (backward Euler, trapezoidal) or the first and second derivatives
//! (Taylor and Obreshkov/Hermite families, which add `ẏ` as an unknown).
//! Three recipes are provided for stepping across a topology change:
//! critical damping adjustment, zero-history half steps, and the
//! ε-backward-Euler start followed by two zero-history steps.
//!
//! Two models ship with the crate: a two-inductor switch circuit with closed
//! form expressions for the first post-switch step, and a three-bus
//! three-phase network with a PLL-based voltage measurement at Bus 1.

// `!(a > b)` is used on purpose so NaN parameters are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod dae;
pub mod discontinuity;
pub mod error;
pub mod integrators;
pub mod measurement;
pub mod network;
pub mod scenario;
pub mod series;

pub use dae::{DaeSystem, JacobianSet, SystemState};
pub use discontinuity::{DiscontinuityPolicy, Event, EventSchedule, Simulation};
pub use error::{Result, SimError};
pub use integrators::{Integrator, IntegratorCoefficients, IntegratorKind, NewtonSettings};
pub use scenario::{run_scenario, ScenarioConfig};
pub use series::{compare, read_csv, write_csv, ComparisonReport, TimeSeries};
