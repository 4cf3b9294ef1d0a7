//! Contextual MDP environments.
//!
//! Both benchmarks implement [`CmdpEnv`]; [`BenchmarkEnv`] dispatches over
//! them so agents can be written against one concrete type.

pub mod bbob;
pub mod cmaes;
pub mod sigmoid;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{Benchmark, Instance};

pub use cmaes::CmaesEnv;
pub use sigmoid::SigmoidEnv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    /// One categorical choice per dimension.
    Discrete { cardinalities: Vec<usize> },
    /// A box `[low_d, high_d]` per dimension.
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { cardinalities } => cardinalities.len(),
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// One benchmark of the contextual MDP.
///
/// After a transition with `done == true`, `step` fails with a usage error
/// until `reset` is called again.
pub trait CmdpEnv {
    fn reset(&mut self, instance: &Instance, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<Transition>;
    fn action_space(&self) -> ActionSpace;
    fn state_dim(&self) -> usize;
    /// Upper bound on the number of steps in one episode.
    fn max_horizon(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Function evaluations available to one CMA-ES episode.
    pub cmaes_budget: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { cmaes_budget: cmaes::DEFAULT_BUDGET }
    }
}

#[derive(Debug, Clone)]
pub enum BenchmarkEnv {
    Sigmoid(SigmoidEnv),
    Cmaes(CmaesEnv),
}

impl BenchmarkEnv {
    pub fn new(benchmark: Benchmark, config: &EnvConfig) -> Self {
        match benchmark {
            Benchmark::Sigmoid => BenchmarkEnv::Sigmoid(SigmoidEnv::new()),
            Benchmark::Cmaes => BenchmarkEnv::Cmaes(CmaesEnv::new(config.cmaes_budget)),
        }
    }

    pub fn benchmark(&self) -> Benchmark {
        match self {
            BenchmarkEnv::Sigmoid(_) => Benchmark::Sigmoid,
            BenchmarkEnv::Cmaes(_) => Benchmark::Cmaes,
        }
    }
}

impl CmdpEnv for BenchmarkEnv {
    fn reset(&mut self, instance: &Instance, seed: u64) -> Result<Vec<f64>> {
        match self {
            BenchmarkEnv::Sigmoid(e) => e.reset(instance, seed),
            BenchmarkEnv::Cmaes(e) => e.reset(instance, seed),
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        match self {
            BenchmarkEnv::Sigmoid(e) => e.step(action),
            BenchmarkEnv::Cmaes(e) => e.step(action),
        }
    }

    fn action_space(&self) -> ActionSpace {
        match self {
            BenchmarkEnv::Sigmoid(e) => e.action_space(),
            BenchmarkEnv::Cmaes(e) => e.action_space(),
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            BenchmarkEnv::Sigmoid(e) => e.state_dim(),
            BenchmarkEnv::Cmaes(e) => e.state_dim(),
        }
    }

    fn max_horizon(&self) -> usize {
        match self {
            BenchmarkEnv::Sigmoid(e) => e.max_horizon(),
            BenchmarkEnv::Cmaes(e) => e.max_horizon(),
        }
    }
}
