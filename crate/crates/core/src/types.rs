use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::env::cmaes::CmaesInstance;
use crate::env::sigmoid::SigmoidInstance;
use crate::error::{Error, Result};

/// Identifier of one instance, stable across every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Sigmoid,
    Cmaes,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Sigmoid => "sigmoid",
            Benchmark::Cmaes => "cmaes",
        }
    }

    /// Fixed episode length, if every episode of this benchmark has one.
    pub fn fixed_horizon(self) -> Option<usize> {
        match self {
            Benchmark::Sigmoid => Some(crate::env::sigmoid::HORIZON),
            Benchmark::Cmaes => None,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            Benchmark::Sigmoid => crate::env::sigmoid::DIMENSIONS,
            Benchmark::Cmaes => 1,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InstanceKind {
    Sigmoid(SigmoidInstance),
    Cmaes(CmaesInstance),
}

/// One task of the contextual MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: InstanceId,
    pub kind: InstanceKind,
}

impl Instance {
    pub fn sigmoid(id: u32, params: SigmoidInstance) -> Self {
        Instance { id: InstanceId(id), kind: InstanceKind::Sigmoid(params) }
    }

    pub fn cmaes(id: u32, params: CmaesInstance) -> Self {
        Instance { id: InstanceId(id), kind: InstanceKind::Cmaes(params) }
    }

    pub fn benchmark(&self) -> Benchmark {
        match self.kind {
            InstanceKind::Sigmoid(_) => Benchmark::Sigmoid,
            InstanceKind::Cmaes(_) => Benchmark::Cmaes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRole {
    Train,
    Test,
    Selected,
    RandomSubset,
}

/// An ordered collection of instances with unique ids, all from one
/// benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSet {
    role: SetRole,
    instances: Vec<Instance>,
}

impl InstanceSet {
    pub fn new(role: SetRole, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for inst in &instances {
            if !seen.insert(inst.id) {
                return Err(Error::arg(format!("duplicate instance id {}", inst.id)));
            }
        }
        if let Some(first) = instances.first() {
            let b = first.benchmark();
            if instances.iter().any(|i| i.benchmark() != b) {
                return Err(Error::arg("instance set mixes benchmarks"));
            }
        }
        Ok(InstanceSet { role, instances })
    }

    pub fn role(&self) -> SetRole {
        self.role
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn benchmark(&self) -> Option<Benchmark> {
        self.instances.first().map(Instance::benchmark)
    }

    pub fn ids(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.instances.iter().map(|i| i.id)
    }

    pub fn get(&self, id: InstanceId) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Restrict to `ids`, keeping this set's order.
    pub fn subset(&self, ids: &BTreeSet<InstanceId>, role: SetRole) -> Result<InstanceSet> {
        if let Some(missing) = ids.iter().find(|id| self.get(**id).is_none()) {
            return Err(Error::arg(format!("instance {missing} is not in the parent set")));
        }
        let instances = self.instances.iter().filter(|i| ids.contains(&i.id)).cloned().collect();
        InstanceSet::new(role, instances)
    }

    /// Whether every instance of `self` appears, by id, in `parent`.
    pub fn is_subset_of(&self, parent: &InstanceSet) -> bool {
        let parent_ids: BTreeSet<_> = parent.ids().collect();
        self.ids().all(|id| parent_ids.contains(&id))
    }
}

/// Actions and rewards of one evaluation or training episode.
///
/// Discrete actions are stored as their per-dimension index cast to `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrajectory {
    pub instance_id: InstanceId,
    pub episode: u32,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl EpisodeTrajectory {
    pub fn new(instance_id: InstanceId, episode: u32, actions: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() || actions.len() != rewards.len() {
            return Err(Error::arg(format!(
                "trajectory for instance {instance_id} has {} actions and {} rewards",
                actions.len(),
                rewards.len()
            )));
        }
        Ok(EpisodeTrajectory { instance_id, episode, actions, rewards })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// The action series of one dimension.
    pub fn action_channel(&self, dim: usize) -> Vec<f64> {
        self.actions.iter().map(|a| a[dim]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(ids: &[u32]) -> InstanceSet {
        let inst = ids.iter().map(|&i| Instance::sigmoid(i, SigmoidInstance::new([1.0, 2.0], [1.0, -1.0]))).collect();
        InstanceSet::new(SetRole::Train, inst).unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let inst = vec![
            Instance::sigmoid(1, SigmoidInstance::new([1.0, 2.0], [1.0, 1.0])),
            Instance::sigmoid(1, SigmoidInstance::new([3.0, 2.0], [1.0, 1.0])),
        ];
        assert!(InstanceSet::new(SetRole::Train, inst).is_err());
    }

    #[test]
    fn selected_subset_passes_check() {
        let train = set(&[0, 1, 2, 3]);
        let ids: BTreeSet<_> = [InstanceId(3), InstanceId(1)].into_iter().collect();
        let sel = train.subset(&ids, SetRole::Selected).unwrap();
        assert_eq!(sel.ids().collect::<Vec<_>>(), vec![InstanceId(1), InstanceId(3)]);
        assert!(sel.is_subset_of(&train));
        assert!(!set(&[9]).is_subset_of(&train));
        let bad: BTreeSet<_> = [InstanceId(9)].into_iter().collect();
        assert!(train.subset(&bad, SetRole::Selected).is_err());
    }

    #[test]
    fn trajectory_lengths_checked() {
        assert!(EpisodeTrajectory::new(InstanceId(0), 0, vec![], vec![]).is_err());
        assert!(EpisodeTrajectory::new(InstanceId(0), 0, vec![vec![1.0]], vec![]).is_err());
        let t = EpisodeTrajectory::new(InstanceId(0), 0, vec![vec![1.0, 2.0]], vec![0.5]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.action_channel(1), vec![2.0]);
    }
}
