//! Load-side frequency control for multi-area power networks with unknown,
//! time-varying power imbalance.
//!
//! Each area regulates a controllable load with a distributed consensus law
//! (optimal dispatch through agreement on marginal cost) plus an adaptive
//! internal model that learns and cancels sinusoidal power variations.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read closer to the math in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod control;
pub mod disturbance;
pub mod engine;
pub mod error;
pub mod integrate;
pub mod internal_model;
pub mod network;
pub mod scenario;
pub mod trajectory;

pub use analysis::MetricsReport;
pub use control::{CommGraph, ControllerConfig, ControllerMode};
pub use engine::{run, Simulation};
pub use error::{Error, Result};
pub use scenario::{load_scenario, load_scenario_file, preset, Scenario};
pub use trajectory::Trajectory;
