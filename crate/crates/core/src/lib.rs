//! Distributed time-varying convex optimization with swarm tracking.
//!
//! Agents with single- or double-integrator dynamics each know one local
//! time-varying cost. The control laws in [`control`] drive the swarm's
//! center onto the minimizer of the summed cost while pairwise potentials
//! ([`potential`]) keep bonded neighbors connected and apart. [`sim`]
//! integrates the closed loop and records monitors, [`verify`] re-derives
//! the analytic quantities with independent oracles, and [`scenario`] /
//! [`cli`] drive everything from TOML scenario files.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod cost;
pub mod error;
pub mod graph;
pub mod output;
pub mod potential;
pub mod scenario;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
