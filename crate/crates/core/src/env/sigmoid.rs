//! Sigmoid approximation benchmark: in each of ten steps the agent picks,
//! per dimension, a grid value in `[0, 1]` and is rewarded for how close it
//! lies to a logistic curve evaluated at the current step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActionSpace, CmdpEnv, Transition};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Instance, InstanceKind, InstanceSet, SetRole};

pub const HORIZON: usize = 10;
pub const DIMENSIONS: usize = 2;
pub const CARDINALITIES: [usize; DIMENSIONS] = [5, 10];
/// `[remaining_budget, shift_0, slope_0, shift_1, slope_1, a_0, a_1]`
pub const STATE_DIM: usize = 1 + 2 * DIMENSIONS + DIMENSIONS;

const EXP_CLAMP: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidInstance {
    /// Inflection point per dimension, in step units.
    pub shifts: [f64; DIMENSIONS],
    /// Signed steepness per dimension.
    pub slopes: [f64; DIMENSIONS],
}

impl SigmoidInstance {
    pub fn new(shifts: [f64; DIMENSIONS], slopes: [f64; DIMENSIONS]) -> Self {
        SigmoidInstance { shifts, slopes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shifts.iter().chain(&self.slopes).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::arg("sigmoid instance parameters must be finite"))
        }
    }
}

/// Logistic curve `1 / (1 + exp(-slope · (t - shift)))`.
pub fn sigmoid_value(t: f64, shift: f64, slope: f64) -> f64 {
    let z = (-slope * (t - shift)).clamp(-EXP_CLAMP, EXP_CLAMP);
    1.0 / (1.0 + libm::exp(z))
}

/// Grid value of action index `index` out of `cardinality` evenly spaced
/// points on `[0, 1]`.
pub fn decode_action(index: usize, cardinality: usize) -> f64 {
    index as f64 / (cardinality - 1) as f64
}

/// Reward of playing `indices` at step `t`.
pub fn step_reward(instance: &SigmoidInstance, t: usize, indices: [usize; DIMENSIONS]) -> f64 {
    (0..DIMENSIONS)
        .map(|d| {
            let target = sigmoid_value(t as f64, instance.shifts[d], instance.slopes[d]);
            1.0 - libm::fabs(target - decode_action(indices[d], CARDINALITIES[d]))
        })
        .product()
}

/// Best achievable per-step reward at step `t` and the indices attaining it.
pub fn best_step(instance: &SigmoidInstance, t: usize) -> ([usize; DIMENSIONS], f64) {
    let mut best = ([0, 0], f64::NEG_INFINITY);
    for a0 in 0..CARDINALITIES[0] {
        for a1 in 0..CARDINALITIES[1] {
            let r = step_reward(instance, t, [a0, a1]);
            if r > best.1 {
                best = ([a0, a1], r);
            }
        }
    }
    best
}

/// Highest possible episode return: the reward is separable over steps, so
/// the per-step grid maxima add up.
pub fn oracle_best_episode_reward(instance: &SigmoidInstance) -> f64 {
    (0..HORIZON).map(|t| best_step(instance, t).1).sum()
}

/// Sampling law for generated instance sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSampling {
    pub shift_range: (f64, f64),
    /// Range of `|slope|`; the sign is drawn separately with equal odds.
    pub slope_magnitude_range: (f64, f64),
}

impl Default for SigmoidSampling {
    fn default() -> Self {
        SigmoidSampling { shift_range: (0.0, 10.0), slope_magnitude_range: (0.5, 5.0) }
    }
}

/// `n` instances with ids `0..n` drawn from the default sampling law.
pub fn sample_sigmoid_instances(n: usize, rng: &mut RngStream) -> Result<InstanceSet> {
    sample_sigmoid_instances_with(n, 0, &SigmoidSampling::default(), SetRole::Train, rng)
}

pub fn sample_sigmoid_instances_with(
    n: usize,
    first_id: u32,
    sampling: &SigmoidSampling,
    role: SetRole,
    rng: &mut RngStream,
) -> Result<InstanceSet> {
    if n == 0 {
        return Err(Error::arg("instance count must be at least 1"));
    }
    let (s_lo, s_hi) = sampling.shift_range;
    let (m_lo, m_hi) = sampling.slope_magnitude_range;
    if !(s_lo <= s_hi && 0.0 <= m_lo && m_lo <= m_hi) {
        return Err(Error::arg("invalid sigmoid sampling ranges"));
    }
    let instances = (0..n)
        .map(|k| {
            let mut shifts = [0.0; DIMENSIONS];
            let mut slopes = [0.0; DIMENSIONS];
            for d in 0..DIMENSIONS {
                shifts[d] = s_lo + (s_hi - s_lo) * rng.random::<f64>();
                let magnitude = m_lo + (m_hi - m_lo) * rng.random::<f64>();
                slopes[d] = if rng.random::<bool>() { magnitude } else { -magnitude };
            }
            Instance::sigmoid(first_id + k as u32, SigmoidInstance::new(shifts, slopes))
        })
        .collect();
    InstanceSet::new(role, instances)
}

#[derive(Debug, Clone, Default)]
pub struct SigmoidEnv {
    instance: Option<SigmoidInstance>,
    t: usize,
    last_action: [usize; DIMENSIONS],
    done: bool,
}

impl SigmoidEnv {
    pub fn new() -> Self {
        Self::default()
    }

    fn observation(&self) -> Vec<f64> {
        let inst = self.instance.expect("observation before reset");
        vec![
            (HORIZON - self.t) as f64,
            inst.shifts[0],
            inst.slopes[0],
            inst.shifts[1],
            inst.slopes[1],
            self.last_action[0] as f64,
            self.last_action[1] as f64,
        ]
    }

    fn parse_action(action: &[f64]) -> Result<[usize; DIMENSIONS]> {
        if action.len() != DIMENSIONS {
            return Err(Error::arg(format!("sigmoid action has {} dimensions, expected {DIMENSIONS}", action.len())));
        }
        let mut idx = [0; DIMENSIONS];
        for d in 0..DIMENSIONS {
            let a = action[d];
            if !(a >= 0.0 && a < CARDINALITIES[d] as f64 && a == libm::floor(a)) {
                return Err(Error::arg(format!("invalid action index {a} in dimension {d}")));
            }
            idx[d] = a as usize;
        }
        Ok(idx)
    }
}

impl CmdpEnv for SigmoidEnv {
    fn reset(&mut self, instance: &Instance, _seed: u64) -> Result<Vec<f64>> {
        let InstanceKind::Sigmoid(params) = &instance.kind else {
            return Err(Error::arg("sigmoid environment needs a sigmoid instance"));
        };
        params.validate()?;
        *self = SigmoidEnv { instance: Some(*params), t: 0, last_action: [0; DIMENSIONS], done: false };
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let Some(inst) = self.instance else {
            return Err(Error::Usage("step before reset".into()));
        };
        if self.done {
            return Err(Error::Usage("step after episode end".into()));
        }
        let idx = Self::parse_action(action)?;
        let reward = step_reward(&inst, self.t, idx);
        self.t += 1;
        self.last_action = idx;
        self.done = self.t >= HORIZON;
        Ok(Transition { state: self.observation(), reward, done: self.done })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { cardinalities: CARDINALITIES.to_vec() }
    }

    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn max_horizon(&self) -> usize {
        HORIZON
    }
}
