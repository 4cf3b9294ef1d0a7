//! Trajectory-based instance subset selection for dynamic algorithm
//! configuration (DAC) with reinforcement learning.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the
//! algorithmic parts of the pipeline:
//!
//! - [`env`]: the two contextual MDPs, a discrete Sigmoid-approximation
//!   benchmark and CMA-ES step-size control on a BBOB-style suite.
//! - [`agent`]: a from-scratch PPO agent (MLP actor/critic, GAE, clipped
//!   surrogate, Adam) plus evaluation rollouts.
//! - [`features`]: raw and time-series meta-features computed from
//!   evaluation trajectories.
//! - [`selector`]: cosine similarity graphs with greedy dominating-set and
//!   maximal-independent-set subset selection.
//! - [`stats`]: baselines, per-instance normalization and bootstrapped
//!   mean / median / IQM.
//!
//! File formats, configuration and the command-line driver live in the
//! `instsel` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod env;
mod error;
pub mod features;
pub mod linalg;
mod rng;
pub mod selector;
pub mod stats;
mod types;

pub use error::{Error, Result};
pub use rng::{derive_rng_stream, RngStream};
pub use types::{Benchmark, EpisodeTrajectory, Instance, InstanceId, InstanceKind, InstanceSet, SetRole};
