//! PPO agent with categorical (Sigmoid) and squashed-Gaussian (CMA-ES)
//! action heads.

mod adam;
mod mlp;
mod policy;
mod ppo;
mod rollout;

pub use adam::Adam;
pub use mlp::{Mlp, MlpCache};
pub use policy::{argmax, squash, ActMode, ActOutput, ObsNormalizer, PolicyHead, PolicyParameters};
pub use ppo::{
    compute_gae, normalize_advantages, ppo_loss, ppo_loss_and_grad, ppo_surrogate_term, train, LossParts, PpoConfig,
    PpoSample, TrainLogEntry, TrainOutcome,
};
pub use rollout::{evaluate_instance, evaluate_rollouts, InstanceRollouts, EVAL_EPISODES};
