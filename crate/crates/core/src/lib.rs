//! Simulation and exact optimization of a frame-based ISAC system that
//! shares its time-frequency resources with an edge-inference uplink.
//!
//! A [`Scenario`] fixes geometry, RF constants and requirements. From it
//! [`channel::build_channels`] synthesizes per-subcarrier channels, the
//! [`solver`] finds the minimum-power DL allocation and representation size
//! for a weight `sigma`, and the [`evaluator`] sweeps `sigma` and estimates
//! goal effectiveness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod ei;
pub mod error;
pub mod evaluator;
pub mod framesim;
pub mod oracle;
pub mod profile;
pub mod scenario;
pub mod sensing;
pub mod solver;
pub mod verify;

pub use channel::{build_channels, ChannelSet};
pub use ei::Representation;
pub use error::{Error, Result};
pub use evaluator::{run_sweep, SweepResult, TradeoffPoint};
pub use profile::InferenceModelProfile;
pub use scenario::{load_scenario, load_scenario_file, Scenario};
pub use solver::{solve_problem_p, Allocation};
