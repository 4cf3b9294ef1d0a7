//! Experiment configuration file (TOML).
//!
//! ```toml
//! benchmark = "sigmoid"      # or "cmaes"
//! seed = 1
//! runs = 5                   # training seeds: seed, seed + 1, ...
//! output_dir = "out"         # optional; falls back to $INSTSEL_OUT
//!
//! [instances]
//! n_train = 300              # sigmoid only
//! n_test = 300               # sigmoid only
//! dimension = 10             # cmaes only
//! train_path = "train.csv"   # optional import instead of generation
//! test_path = "test.csv"
//!
//! [env]
//! cmaes_budget = 2000
//!
//! [ppo]                      # any PpoConfig field
//! total_env_steps = 10000
//!
//! [[selectors]]
//! method = "MIS"
//! spec = "ts-R"
//! threshold = 0.7
//! repetitions = 5
//!
//! [baselines]
//! isa = false
//! random_subsets = true
//! random_fraction = 0.1
//! random_count = 5
//!
//! [evaluation]
//! episodes = 10
//! n_boot = 5000
//! ```

use std::path::{Path, PathBuf};

use instsel_core::agent::PpoConfig;
use instsel_core::env::EnvConfig;
use instsel_core::selector::SelectionConfig;
use instsel_core::Benchmark;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub seed: u64,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub instances: InstancesConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoOverrides,
    pub selectors: Vec<SelectorEntry>,
    #[serde(default)]
    pub baselines: Baselines,
    #[serde(default)]
    pub evaluation: Evaluation,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstancesConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
}

impl Default for InstancesConfig {
    fn default() -> Self {
        InstancesConfig { n_train: 300, n_test: 300, dimension: 10, train_path: None, test_path: None }
    }
}

/// Optional replacements for the per-benchmark PPO defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gae_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_per_update: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollout_horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_env_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_scaling: Option<bool>,
}

impl PpoOverrides {
    pub fn apply(&self, mut c: PpoConfig) -> PpoConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(
            gamma,
            gae_lambda,
            clip_eps,
            epochs_per_update,
            rollout_horizon,
            minibatch_size,
            learning_rate,
            value_coef,
            entropy_coef,
            max_grad_norm,
            total_env_steps,
            hidden_sizes,
            reward_scaling
        );
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorEntry {
    pub method: String,
    pub spec: String,
    pub threshold: f64,
    #[serde(default = "five")]
    pub repetitions: usize,
}

fn five() -> usize {
    5
}

impl SelectorEntry {
    pub fn to_config(&self) -> Result<SelectionConfig, CliError> {
        let bad = |e: instsel_core::Error| CliError::usage(format!("selector: {e}"));
        Ok(SelectionConfig {
            method: self.method.parse().map_err(bad)?,
            threshold: self.threshold,
            repetitions: self.repetitions,
            spec: self.spec.parse().map_err(bad)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baselines {
    pub isa: bool,
    pub random_subsets: bool,
    pub random_fraction: f64,
    pub random_count: usize,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines { isa: false, random_subsets: true, random_fraction: 0.1, random_count: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    pub episodes: usize,
    pub n_boot: usize,
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation { episodes: 10, n_boot: 5000 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        // relative instance paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.instances.train_path, &mut config.instances.test_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(CliError::usage("runs must be at least 1"));
        }
        if self.selectors.is_empty() {
            return Err(CliError::usage("at least one [[selectors]] entry is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for s in self.selection_configs()? {
            if !(s.threshold > 0.0) || s.repetitions == 0 {
                return Err(CliError::usage(format!(
                    "selector {}: threshold and repetitions must be positive",
                    s.label()
                )));
            }
            if !labels.insert(s.label()) {
                return Err(CliError::usage(format!("selector {} is listed twice", s.label())));
            }
        }
        if self.evaluation.episodes == 0 || self.evaluation.n_boot == 0 {
            return Err(CliError::usage("evaluation episodes and n_boot must be positive"));
        }
        if self.baselines.random_subsets
            && (!(self.baselines.random_fraction > 0.0 && self.baselines.random_fraction <= 1.0)
                || self.baselines.random_count == 0)
        {
            return Err(CliError::usage("random_fraction must be in (0, 1] and random_count positive"));
        }
        let imported = self.instances.train_path.is_some() || self.instances.test_path.is_some();
        if imported && (self.instances.train_path.is_none() || self.instances.test_path.is_none()) {
            return Err(CliError::usage("train_path and test_path must be given together"));
        }
        if self.benchmark == Benchmark::Sigmoid
            && !imported
            && (self.instances.n_train == 0 || self.instances.n_test == 0)
        {
            return Err(CliError::usage("n_train and n_test must be positive"));
        }
        self.ppo_config().validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(())
    }

    pub fn ppo_config(&self) -> PpoConfig {
        self.ppo.apply(PpoConfig::for_benchmark(self.benchmark))
    }

    pub fn selection_configs(&self) -> Result<Vec<SelectionConfig>, CliError> {
        self.selectors.iter().map(SelectorEntry::to_config).collect()
    }

    /// Seed of training run `r`.
    pub fn run_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
benchmark = "sigmoid"
seed = 3

[[selectors]]
method = "MIS"
spec = "ts-R"
threshold = 0.7
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.runs, 1);
        assert_eq!(c.instances.n_train, 300);
        assert_eq!(c.selectors[0].repetitions, 5);
        assert_eq!(c.ppo_config(), PpoConfig::default());
        assert_eq!(c.selection_configs().unwrap()[0].label(), "MIS-ts-R-0.7");
        assert_eq!(c.run_seed(2), 5);
    }

    #[test]
    fn overrides_apply() {
        let text = format!("{MINIMAL}\n[ppo]\ntotal_env_steps = 500\nhidden_sizes = [8]\n");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(c.ppo_config().total_env_steps, 500);
        assert_eq!(c.ppo_config().hidden_sizes, vec![8]);
        assert_eq!(c.ppo_config().rollout_horizon, 256);
        let cm = ExperimentConfig::from_toml(&MINIMAL.replace("sigmoid", "cmaes")).unwrap();
        assert_eq!(cm.ppo_config().total_env_steps, 1_000_000);
        assert!(cm.ppo_config().reward_scaling);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            MINIMAL.replace("seed = 3", ""),
            MINIMAL.replace("MIS", "XYZ"),
            MINIMAL.replace("ts-R", "ts-Q"),
            MINIMAL.replace("0.7", "-0.7"),
            format!("{MINIMAL}\nbogus = 1\n"),
            format!("{MINIMAL}\n[ppo]\nlearning_rate = -1.0\n"),
            "benchmark = \"sigmoid\"\nseed = 1\nselectors = []\n".to_string(),
        ] {
            assert!(matches!(ExperimentConfig::from_toml(&bad), Err(CliError::Usage(_))), "{bad}");
        }
    }
}
