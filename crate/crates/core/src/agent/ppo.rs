//! Proximal policy optimization: generalized advantage estimation, the
//! clipped surrogate loss with its analytic gradient, and the training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::policy::{head_terms, ActMode, PolicyHead, PolicyParameters};
use crate::env::{BenchmarkEnv, CmdpEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Benchmark, InstanceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs_per_update: usize,
    pub rollout_horizon: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip applied before each optimizer step.
    pub max_grad_norm: f64,
    pub total_env_steps: usize,
    pub hidden_sizes: Vec<usize>,
    /// Divide rewards by a running estimate of the absolute discounted
    /// return. Needed on CMA-ES, whose raw rewards span many magnitudes.
    pub reward_scaling: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs_per_update: 10,
            rollout_horizon: 256,
            minibatch_size: 64,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            total_env_steps: 10_000,
            hidden_sizes: vec![64, 64],
            reward_scaling: false,
        }
    }
}

impl PpoConfig {
    pub fn for_benchmark(benchmark: Benchmark) -> Self {
        match benchmark {
            Benchmark::Sigmoid => PpoConfig::default(),
            Benchmark::Cmaes => PpoConfig { total_env_steps: 1_000_000, reward_scaling: true, ..PpoConfig::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("clip_eps", self.clip_eps),
            ("learning_rate", self.learning_rate),
            ("value_coef", self.value_coef),
            ("max_grad_norm", self.max_grad_norm),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::arg(format!("PPO setting {name} must be positive")));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::arg("PPO entropy_coef must be non-negative"));
        }
        if self.epochs_per_update == 0
            || self.rollout_horizon == 0
            || self.minibatch_size == 0
            || self.total_env_steps == 0
            || self.hidden_sizes.is_empty()
            || self.hidden_sizes.contains(&0)
        {
            return Err(Error::arg("PPO sizes and step counts must be positive"));
        }
        Ok(())
    }
}

/// Advantages and returns for one episode segment.
///
/// `last_value` bootstraps past the segment end (zero for a terminal state).
pub fn compute_gae(rewards: &[f64], values: &[f64], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Clipped surrogate `min(ρA, clip(ρ, 1-ε, 1+ε)A)`.
pub fn ppo_surrogate_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    f64::min(ratio * advantage, clipped * advantage)
}

/// One stored decision, with the observation already normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Minibatch advantages standardized to zero mean and unit variance.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return adv.to_vec();
    }
    if adv.iter().all(|a| *a == adv[0]) {
        return vec![0.0; adv.len()];
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var) + 1e-8;
    adv.iter().map(|a| (a - mean) / sd).collect()
}

/// Full PPO loss on a minibatch:
/// `-mean(surrogate) + c_v·mean((V - R)²) - c_e·mean(entropy)`, with
/// advantages normalized per minibatch. Returns the loss and its gradient
/// with respect to [`PolicyParameters::flat_params`].
pub fn ppo_loss_and_grad(policy: &PolicyParameters, batch: &[&PpoSample], config: &PpoConfig) -> (LossParts, Vec<f64>) {
    let na = policy.actor.num_params();
    let mut grad = vec![0.0; policy.num_params()];
    let (g_actor, g_critic) = grad.split_at_mut(na);
    let b = batch.len() as f64;
    let adv = normalize_advantages(&batch.iter().map(|s| s.advantage).collect::<Vec<_>>());
    let mut parts = LossParts::default();
    let mut clipped = 0usize;
    for (s, &a) in batch.iter().zip(&adv) {
        let cache = policy.actor.forward_cached(&s.obs);
        let terms = head_terms(&policy.head, cache.output(), &s.raw_action);
        let ratio = libm::exp(terms.log_prob - s.old_log_prob);
        let surrogate = ppo_surrogate_term(ratio, a, config.clip_eps);
        // gradient flows only through the unclipped branch
        let unclipped = ratio * a <= ratio.clamp(1.0 - config.clip_eps, 1.0 + config.clip_eps) * a;
        if !unclipped {
            clipped += 1;
        }
        let d_logp = if unclipped { -a * ratio / b } else { 0.0 };
        let d_ent = -config.entropy_coef / b;
        let d_out: Vec<f64> =
            terms.d_log_prob.iter().zip(&terms.d_entropy).map(|(lp, en)| d_logp * lp + d_ent * en).collect();
        policy.actor.backward(&cache, &d_out, g_actor);

        let vcache = policy.critic.forward_cached(&s.obs);
        let v = vcache.output()[0];
        let err = v - s.ret;
        policy.critic.backward(&vcache, &[2.0 * config.value_coef * err / b], g_critic);

        parts.policy -= surrogate / b;
        parts.value += err * err / b;
        parts.entropy += terms.entropy / b;
    }
    parts.total = parts.policy + config.value_coef * parts.value - config.entropy_coef * parts.entropy;
    parts.clip_fraction = clipped as f64 / b;
    (parts, grad)
}

/// Loss value only, for finite-difference checks.
pub fn ppo_loss(policy: &PolicyParameters, batch: &[&PpoSample], config: &PpoConfig) -> f64 {
    let b = batch.len() as f64;
    let adv = normalize_advantages(&batch.iter().map(|s| s.advantage).collect::<Vec<_>>());
    let mut total = 0.0;
    for (s, &a) in batch.iter().zip(&adv) {
        let out = policy.actor.forward(&s.obs);
        let terms = head_terms(&policy.head, &out, &s.raw_action);
        let ratio = libm::exp(terms.log_prob - s.old_log_prob);
        let v = policy.critic.forward(&s.obs)[0];
        total += -ppo_surrogate_term(ratio, a, config.clip_eps) / b + config.value_coef * (v - s.ret) * (v - s.ret) / b
            - config.entropy_coef * terms.entropy / b;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub update: usize,
    /// Environment steps consumed after this update.
    pub steps: usize,
    /// Mean return of episodes finished during this update's rollout.
    pub mean_return: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyParameters,
    pub log: Vec<TrainLogEntry>,
    pub env_steps: usize,
}

/// Running mean of the absolute discounted return.
#[derive(Debug, Clone, Default)]
struct RewardScaler {
    running_return: f64,
    mean_abs: f64,
    count: f64,
}

impl RewardScaler {
    fn observe(&mut self, reward: f64, done: bool, gamma: f64) {
        self.running_return = gamma * self.running_return + reward;
        self.count += 1.0;
        self.mean_abs += (libm::fabs(self.running_return) - self.mean_abs) / self.count;
        if done {
            self.running_return = 0.0;
        }
    }

    fn scale(&self) -> f64 {
        f64::max(self.mean_abs, 1e-8)
    }
}

struct Step {
    obs: Vec<f64>,
    raw_action: Vec<f64>,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
}

/// Train a fresh policy on `instances`. Each episode runs on an instance
/// drawn uniformly from the set; exactly `config.total_env_steps`
/// environment steps are consumed.
pub fn train(
    env_config: &EnvConfig,
    instances: &InstanceSet,
    config: &PpoConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    config.validate()?;
    let benchmark = instances.benchmark().ok_or_else(|| Error::arg("cannot train on an empty instance set"))?;
    let mut env = BenchmarkEnv::new(benchmark, env_config);
    let head = PolicyHead::for_action_space(&env.action_space());
    let mut policy = PolicyParameters::new(env.state_dim(), head, &config.hidden_sizes, rng);
    let mut optimizer = Adam::new(policy.num_params(), config.learning_rate);
    let mut scaler = RewardScaler::default();
    let pool = instances.instances();

    let reset = |env: &mut BenchmarkEnv, rng: &mut RngStream| -> Result<Vec<f64>> {
        let inst = &pool[rng.random_range(0..pool.len())];
        let seed: u64 = rng.random();
        env.reset(inst, seed)
    };

    let mut state = reset(&mut env, rng)?;
    policy.obs_norm.update(&state);
    let mut episode_return = 0.0;
    let mut steps = 0;
    let mut log = Vec::new();
    while steps < config.total_env_steps {
        let horizon = config.rollout_horizon.min(config.total_env_steps - steps);
        let mut rollout: Vec<Step> = Vec::with_capacity(horizon);
        let mut finished = Vec::new();
        for _ in 0..horizon {
            let obs = policy.obs_norm.normalize(&state);
            let out = policy.act_normalized(&obs, rng, ActMode::Sample);
            let tr = env.step(&out.action)?;
            steps += 1;
            episode_return += tr.reward;
            if config.reward_scaling {
                scaler.observe(tr.reward, tr.done, config.gamma);
            }
            rollout.push(Step {
                obs,
                raw_action: out.raw,
                log_prob: out.raw_log_prob,
                value: out.value,
                reward: tr.reward,
                done: tr.done,
            });
            state = if tr.done {
                finished.push(episode_return);
                episode_return = 0.0;
                reset(&mut env, rng)?
            } else {
                tr.state
            };
            policy.obs_norm.update(&state);
        }
        let bootstrap = match rollout.last() {
            Some(s) if !s.done => policy.critic.forward(&policy.obs_norm.normalize(&state))[0],
            _ => 0.0,
        };
        let reward_scale = if config.reward_scaling { scaler.scale() } else { 1.0 };
        let samples = build_samples(&rollout, bootstrap, reward_scale, config);
        update_policy(&mut policy, &mut optimizer, &samples, config, rng);

        let mean_return =
            if finished.is_empty() { None } else { Some(finished.iter().sum::<f64>() / finished.len() as f64) };
        log.push(TrainLogEntry { update: log.len(), steps, mean_return });
    }
    if !policy.is_finite() {
        return Err(Error::arg("training diverged to non-finite weights"));
    }
    Ok(TrainOutcome { policy, log, env_steps: steps })
}

fn build_samples(rollout: &[Step], bootstrap: f64, reward_scale: f64, config: &PpoConfig) -> Vec<PpoSample> {
    let mut samples = Vec::with_capacity(rollout.len());
    let mut start = 0;
    for end in 0..rollout.len() {
        let last = end + 1 == rollout.len();
        if !(rollout[end].done || last) {
            continue;
        }
        let seg = &rollout[start..=end];
        let rewards: Vec<f64> = seg.iter().map(|s| s.reward / reward_scale).collect();
        let values: Vec<f64> = seg.iter().map(|s| s.value).collect();
        let last_value = if rollout[end].done { 0.0 } else { bootstrap };
        let (adv, ret) = compute_gae(&rewards, &values, last_value, config.gamma, config.gae_lambda);
        for (i, s) in seg.iter().enumerate() {
            samples.push(PpoSample {
                obs: s.obs.clone(),
                raw_action: s.raw_action.clone(),
                old_log_prob: s.log_prob,
                advantage: adv[i],
                ret: ret[i],
            });
        }
        start = end + 1;
    }
    samples
}

fn update_policy(
    policy: &mut PolicyParameters,
    optimizer: &mut Adam,
    samples: &[PpoSample],
    config: &PpoConfig,
    rng: &mut RngStream,
) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut params = policy.flat_params();
    for _ in 0..config.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let batch: Vec<&PpoSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (_, mut grad) = ppo_loss_and_grad(policy, &batch, config);
            clip_grad_norm(&mut grad, config.max_grad_norm);
            optimizer.step(&mut params, &grad);
            policy.set_flat_params(&params);
        }
    }
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_hand_sums() {
        let (adv, ret) = compute_gae(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0], 0.0, 1.0, 1.0);
        assert_eq!(adv, vec![3.0, 2.0, 1.0]);
        assert_eq!(ret, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn gae_lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.2, 0.4, -0.3];
        let (adv, _) = compute_gae(&r, &v, 0.7, 0.9, 0.0);
        let td = [r[0] + 0.9 * v[1] - v[0], r[1] + 0.9 * v[2] - v[1], r[2] + 0.9 * 0.7 - v[2]];
        for (a, t) in adv.iter().zip(td) {
            assert!((a - t).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_zero_everything() {
        let (adv, ret) = compute_gae(&[0.0; 4], &[0.0; 4], 0.0, 0.99, 0.95);
        assert!(adv.iter().chain(&ret).all(|v| *v == 0.0));
    }

    #[test]
    fn surrogate_clip_arithmetic() {
        assert!((ppo_surrogate_term(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((ppo_surrogate_term(0.5, -1.0, 0.2) - -0.8).abs() < 1e-15);
        assert_eq!(ppo_surrogate_term(1.0, 0.37, 0.2), 0.37);
        assert_eq!(ppo_surrogate_term(1.0, -2.5, 0.2), -2.5);
    }

    #[test]
    fn advantage_normalization() {
        let n = normalize_advantages(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = n.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert_eq!(normalize_advantages(&[2.0]), vec![2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip_eps: 0.0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { total_env_steps: 0, ..PpoConfig::default() }.validate().is_err());
        assert_eq!(PpoConfig::for_benchmark(Benchmark::Cmaes).total_env_steps, 1_000_000);
    }
}
