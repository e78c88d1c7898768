//! Optimal sampling and transmission for tracking a binary Markov source
//! over an energy-harvesting link, measured by the age of incorrect
//! information (AoII).
//!
//! The partially observed problem reduces to a finite MDP over
//! `(battery level, AoI)` whose cost is the expected AoII under the
//! AoI-parameterised belief. The crate builds that MDP, solves it with
//! relative value iteration, checks its chain structure and validates the
//! resulting policies against a slot-level simulator.

pub mod belief;
pub mod chain_analysis;
pub mod error;
pub mod mdp;
pub mod model;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use mdp::{build_kernel, MdpKernel, Objective, PolicyTable};
pub use model::{Action, MdpState, ModelParams, TransmitRule};
