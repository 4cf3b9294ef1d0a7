use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::policy::{ActMode, PolicyParameters};
use crate::env::{BenchmarkEnv, CmdpEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{EpisodeTrajectory, Instance, InstanceId, InstanceSet};

pub const EVAL_EPISODES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRollouts {
    pub instance_id: InstanceId,
    pub trajectories: Vec<EpisodeTrajectory>,
    pub mean_return: f64,
}

/// Roll out `episodes` stochastic episodes of `policy` on one instance.
///
/// Randomness comes from `rng.derive("instance-{id}")`, so instances can be
/// evaluated in any order or in parallel with identical results.
pub fn evaluate_instance(
    policy: &PolicyParameters,
    env_config: &EnvConfig,
    instance: &Instance,
    episodes: usize,
    rng: &RngStream,
) -> Result<InstanceRollouts> {
    if episodes == 0 {
        return Err(Error::arg("need at least one evaluation episode"));
    }
    let mut env = BenchmarkEnv::new(instance.benchmark(), env_config);
    if !policy.head.matches(&env.action_space()) || policy.state_dim() != env.state_dim() {
        return Err(Error::arg(format!("policy does not fit the {} environment", instance.benchmark())));
    }
    let mut rng = rng.derive(&format!("instance-{}", instance.id));
    let mut trajectories = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let seed: u64 = rng.random();
        let mut state = env.reset(instance, seed)?;
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        loop {
            let out = policy.act(&state, &mut rng, ActMode::Sample)?;
            let tr = env.step(&out.action)?;
            actions.push(out.action);
            rewards.push(tr.reward);
            if tr.done {
                break;
            }
            state = tr.state;
        }
        trajectories.push(EpisodeTrajectory::new(instance.id, episode as u32, actions, rewards)?);
    }
    let mean_return = trajectories.iter().map(EpisodeTrajectory::total_reward).sum::<f64>() / episodes as f64;
    Ok(InstanceRollouts { instance_id: instance.id, trajectories, mean_return })
}

/// [`evaluate_instance`] over a whole set, in set order.
pub fn evaluate_rollouts(
    policy: &PolicyParameters,
    env_config: &EnvConfig,
    instances: &InstanceSet,
    episodes: usize,
    rng: &RngStream,
) -> Result<Vec<InstanceRollouts>> {
    instances.instances().iter().map(|inst| evaluate_instance(policy, env_config, inst, episodes, rng)).collect()
}
