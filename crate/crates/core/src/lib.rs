//! Event-triggered, observer-based, fixed-time tracking consensus control
//! for leader-follower nonlinear multi-agent systems: a deterministic
//! simulation library plus the `ftcsim` CLI.
//!
//! Modules follow the control architecture: the [`topology`] graph feeds the
//! stage-1 consensus error, [`observer`] supplies state estimates,
//! [`controller`] builds the backstepping chain through the [`switching`]
//! dead-zone machinery and the [`approximator`] gain, and [`engine`]
//! integrates the closed loop with zero-order-hold triggering.

pub mod approximator;
pub mod controller;
pub mod engine;
pub mod error;
pub mod expr;
pub mod observer;
pub mod plant;
pub mod report;
pub mod scenario;
pub mod switching;
pub mod topology;

pub use error::{Error, Result};
