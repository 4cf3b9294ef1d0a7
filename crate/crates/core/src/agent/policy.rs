use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::env::ActionSpace;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const OBS_CLIP: f64 = 10.0;
const OBS_EPS: f64 = 1e-8;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Output distribution of the actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyHead {
    /// Independent categorical per dimension; the actor emits the logits of
    /// all dimensions back to back.
    Categorical { cardinalities: Vec<usize> },
    /// Gaussian in an unbounded space squashed into `[low, high]` with
    /// `tanh`; the actor emits all means, then all log-std pre-activations.
    SquashedGaussian { low: Vec<f64>, high: Vec<f64> },
}

impl PolicyHead {
    pub fn for_action_space(space: &ActionSpace) -> Self {
        match space {
            ActionSpace::Discrete { cardinalities } => PolicyHead::Categorical { cardinalities: cardinalities.clone() },
            ActionSpace::Continuous { low, high } => {
                PolicyHead::SquashedGaussian { low: low.clone(), high: high.clone() }
            }
        }
    }

    pub fn matches(&self, space: &ActionSpace) -> bool {
        *self == Self::for_action_space(space)
    }

    pub fn action_dim(&self) -> usize {
        match self {
            PolicyHead::Categorical { cardinalities } => cardinalities.len(),
            PolicyHead::SquashedGaussian { low, .. } => low.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PolicyHead::Categorical { cardinalities } => cardinalities.iter().sum(),
            PolicyHead::SquashedGaussian { low, .. } => 2 * low.len(),
        }
    }
}

/// Running mean / variance of observations; inputs are standardized and
/// clipped to `±10` before entering either network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        ObsNormalizer { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn update(&mut self, x: &[f64]) {
        let total = self.count + 1.0;
        for i in 0..self.mean.len() {
            let delta = x[i] - self.mean[i];
            let new_mean = self.mean[i] + delta / total;
            let m2 = self.var[i] * self.count + delta * delta * self.count / total;
            self.mean[i] = new_mean;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, var))| ((v - m) / libm::sqrt(var + OBS_EPS)).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}

/// Weights of the actor and critic plus the observation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub head: PolicyHead,
    pub obs_norm: ObsNormalizer,
    pub actor: Mlp,
    pub critic: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    /// Draw from the policy distribution.
    Sample,
    /// Most likely action (argmax / distribution mean).
    Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    /// Action as handed to the environment.
    pub action: Vec<f64>,
    /// Pre-squash Gaussian sample, or the category indices.
    pub raw: Vec<f64>,
    /// Log-density of `action`, including the squash correction.
    pub log_prob: f64,
    /// Log-density of `raw`. The squash Jacobian cancels in probability
    /// ratios, so PPO works with this one.
    pub raw_log_prob: f64,
    pub value: f64,
}

/// Map an unbounded sample into `[low, high]`.
pub fn squash(u: f64, low: f64, high: f64) -> f64 {
    let a = low + 0.5 * (high - low) * (libm::tanh(u) + 1.0);
    a.clamp(low, high)
}

/// `ln(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = f64::max(x, 0.0) + libm::log1p(libm::exp(-libm::fabs(x)));
    2.0 * (core::f64::consts::LN_2 - u - softplus)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(z.iter().map(|v| libm::exp(v - max)).sum::<f64>());
    z.iter().map(|v| v - lse).collect()
}

/// Log-probability and entropy of the head, with their derivatives with
/// respect to the actor output.
#[derive(Debug, Clone)]
pub(crate) struct HeadTerms {
    pub log_prob: f64,
    pub entropy: f64,
    pub d_log_prob: Vec<f64>,
    pub d_entropy: Vec<f64>,
}

pub(crate) fn head_terms(head: &PolicyHead, out: &[f64], raw: &[f64]) -> HeadTerms {
    let mut t =
        HeadTerms { log_prob: 0.0, entropy: 0.0, d_log_prob: vec![0.0; out.len()], d_entropy: vec![0.0; out.len()] };
    match head {
        PolicyHead::Categorical { cardinalities } => {
            let mut off = 0;
            for (d, &k) in cardinalities.iter().enumerate() {
                let ls = log_softmax(&out[off..off + k]);
                let a = raw[d] as usize;
                let h: f64 = -ls.iter().map(|l| libm::exp(*l) * l).sum::<f64>();
                t.log_prob += ls[a];
                t.entropy += h;
                for j in 0..k {
                    let p = libm::exp(ls[j]);
                    t.d_log_prob[off + j] = if j == a { 1.0 - p } else { -p };
                    t.d_entropy[off + j] = -p * (ls[j] + h);
                }
                off += k;
            }
        }
        PolicyHead::SquashedGaussian { low, .. } => {
            let dims = low.len();
            let range = LOG_STD_MAX - LOG_STD_MIN;
            for d in 0..dims {
                let mu = out[d];
                let sg = sigmoid(out[dims + d]);
                let log_std = LOG_STD_MIN + range * sg;
                let std = libm::exp(log_std);
                let zs = (raw[d] - mu) / std;
                let dlogstd_dh = range * sg * (1.0 - sg);
                t.log_prob += -0.5 * zs * zs - log_std - HALF_LN_2PI;
                t.entropy += log_std + 0.5 + HALF_LN_2PI;
                t.d_log_prob[d] = zs / std;
                t.d_log_prob[dims + d] = (zs * zs - 1.0) * dlogstd_dh;
                t.d_entropy[dims + d] = dlogstd_dh;
            }
        }
    }
    t
}

impl PolicyParameters {
    /// Fresh actor and critic with the given hidden layer widths.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, head: PolicyHead, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(head.output_dim());
        sizes.push(1);
        let mut actor = Mlp::new(&actor_sizes, 0.01, rng);
        let critic = Mlp::new(&sizes, 1.0, rng);
        if let PolicyHead::SquashedGaussian { low, .. } = &head {
            // start at log-std 0
            let dims = low.len();
            let h0 = libm::log(-LOG_STD_MIN / LOG_STD_MAX);
            actor.output_bias_mut()[dims..].iter_mut().for_each(|b| *b = h0);
        }
        PolicyParameters { head, obs_norm: ObsNormalizer::new(state_dim), actor, critic }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.critic.num_params()
    }

    /// Actor weights followed by critic weights.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.actor.params().to_vec();
        v.extend_from_slice(self.critic.params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let na = self.actor.num_params();
        self.actor.params_mut().copy_from_slice(&flat[..na]);
        self.critic.params_mut().copy_from_slice(&flat[na..]);
    }

    pub fn is_finite(&self) -> bool {
        self.actor.params().iter().chain(self.critic.params()).all(|v| v.is_finite())
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim() {
            return Err(Error::arg(format!(
                "state has dimension {}, policy expects {}",
                state.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// Critic estimate for a raw (unnormalized) state.
    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.critic.forward(&self.obs_norm.normalize(state))[0])
    }

    /// Choose an action for a raw (unnormalized) state.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R, mode: ActMode) -> Result<ActOutput> {
        self.check_state(state)?;
        let obs = self.obs_norm.normalize(state);
        Ok(self.act_normalized(&obs, rng, mode))
    }

    pub(crate) fn act_normalized<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, mode: ActMode) -> ActOutput {
        let out = self.actor.forward(obs);
        let value = self.critic.forward(obs)[0];
        let (action, raw) = match &self.head {
            PolicyHead::Categorical { cardinalities } => {
                let mut off = 0;
                let mut idx = Vec::with_capacity(cardinalities.len());
                for &k in cardinalities {
                    let logits = &out[off..off + k];
                    let choice = match mode {
                        ActMode::Mode => argmax(logits),
                        ActMode::Sample => sample_categorical(&log_softmax(logits), rng),
                    };
                    idx.push(choice as f64);
                    off += k;
                }
                (idx.clone(), idx)
            }
            PolicyHead::SquashedGaussian { low, high } => {
                let dims = low.len();
                let raw: Vec<f64> = (0..dims)
                    .map(|d| match mode {
                        ActMode::Mode => out[d],
                        ActMode::Sample => {
                            let log_std = LOG_STD_MIN + (LOG_STD_MAX - LOG_STD_MIN) * sigmoid(out[dims + d]);
                            out[d] + libm::exp(log_std) * rng.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect();
                let action = (0..dims).map(|d| squash(raw[d], low[d], high[d])).collect();
                (action, raw)
            }
        };
        let raw_log_prob = head_terms(&self.head, &out, &raw).log_prob;
        let log_prob = match &self.head {
            PolicyHead::Categorical { .. } => raw_log_prob,
            PolicyHead::SquashedGaussian { low, high } => {
                raw_log_prob
                    - (0..low.len())
                        .map(|d| libm::log(0.5 * (high[d] - low[d])) + log_one_minus_tanh_sq(raw[d]))
                        .sum::<f64>()
            }
        };
        ActOutput { action, raw, log_prob, raw_log_prob, value }
    }

    /// Per-dimension entropies of the action distribution at a raw state.
    pub fn entropies(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let out = self.actor.forward(&self.obs_norm.normalize(state));
        Ok(match &self.head {
            PolicyHead::Categorical { cardinalities } => {
                let mut off = 0;
                cardinalities
                    .iter()
                    .map(|&k| {
                        let ls = log_softmax(&out[off..off + k]);
                        off += k;
                        -ls.iter().map(|l| libm::exp(*l) * l).sum::<f64>()
                    })
                    .collect()
            }
            PolicyHead::SquashedGaussian { low, .. } => {
                let dims = low.len();
                (0..dims)
                    .map(|d| LOG_STD_MIN + (LOG_STD_MAX - LOG_STD_MIN) * sigmoid(out[dims + d]) + 0.5 + HALF_LN_2PI)
                    .collect()
            }
        })
    }
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += libm::exp(*lp);
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}
