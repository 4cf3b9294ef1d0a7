//! Evaluation protocol: baselines, per-instance normalization and
//! bootstrapped aggregate statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{train, PpoConfig, TrainOutcome};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{InstanceId, InstanceSet, SetRole};

pub const BOOTSTRAP_SAMPLES: usize = 5000;

/// Mean episode return of one trained policy on one test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub policy: String,
    pub instance_id: InstanceId,
    pub seed: u64,
    /// Selector or random-subset repetition; 0 where not applicable.
    pub repetition: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyScoreTable {
    rows: Vec<ScoreRow>,
}

impl PolicyScoreTable {
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !r.value.is_finite() {
                return Err(Error::arg(format!("non-finite score for {} on instance {}", r.policy, r.instance_id)));
            }
            if !seen.insert((r.policy.as_str(), r.instance_id, r.seed, r.repetition)) {
                return Err(Error::arg(format!(
                    "duplicate score for {} on instance {} (seed {}, repetition {})",
                    r.policy, r.instance_id, r.seed, r.repetition
                )));
            }
        }
        Ok(PolicyScoreTable { rows })
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<ScoreRow> {
        self.rows
    }

    /// Policy labels in order of first appearance.
    pub fn policies(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.policy) {
                out.push(r.policy.clone());
            }
        }
        out
    }

    pub fn values_of(&self, policy: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.policy == policy).map(|r| r.value).collect()
    }
}

/// Min-max normalization per instance over every row of that instance;
/// an instance whose scores are all equal maps to 0.5.
pub fn normalize_per_instance(table: &PolicyScoreTable) -> PolicyScoreTable {
    let mut range: BTreeMap<InstanceId, (f64, f64)> = BTreeMap::new();
    for r in table.rows() {
        let e = range.entry(r.instance_id).or_insert((r.value, r.value));
        e.0 = e.0.min(r.value);
        e.1 = e.1.max(r.value);
    }
    let rows = table
        .rows()
        .iter()
        .map(|r| {
            let (lo, hi) = range[&r.instance_id];
            let value = if hi > lo { ((r.value - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
            ScoreRow { value, ..r.clone() }
        })
        .collect();
    PolicyScoreTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
    Iqm,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Mean, Statistic::Median, Statistic::Iqm];

    pub fn apply(self, values: &[f64]) -> Result<f64> {
        match self {
            Statistic::Mean => mean(values),
            Statistic::Median => median(values),
            Statistic::Iqm => iqm(values),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::Iqm => "iqm",
        })
    }
}

fn non_empty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        Err(Error::arg("statistic of an empty sample"))
    } else {
        Ok(())
    }
}

pub fn mean(values: &[f64]) -> Result<f64> {
    non_empty(values)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Result<f64> {
    non_empty(values)?;
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Interquartile mean: drop `⌊n/4⌋` values from each end of the sorted
/// sample and average the rest. Fewer than four values: plain mean.
pub fn iqm(values: &[f64]) -> Result<f64> {
    non_empty(values)?;
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let trim = s.len() / 4;
    mean(&s[trim..s.len() - trim])
}

/// Point estimate with a 95% percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn bootstrap_statistic<R: Rng + ?Sized>(
    values: &[f64],
    stat: Statistic,
    n_boot: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let point = stat.apply(values)?;
    if n_boot == 0 {
        return Err(Error::arg("bootstrap needs at least one resample"));
    }
    let n = values.len();
    let mut resample = alloc::vec![0.0; n];
    let mut stats = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for slot in resample.iter_mut() {
            *slot = values[rng.random_range(0..n)];
        }
        stats.push(stat.apply(&resample)?);
    }
    stats.sort_by(f64::total_cmp);
    Ok(Estimate { point, ci_low: percentile(&stats, 0.025), ci_high: percentile(&stats, 0.975) })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `k` subsets of `round(fraction · |train|)` instances drawn without
/// replacement.
pub fn random_subsets(train: &InstanceSet, fraction: f64, k: usize, rng: &mut RngStream) -> Result<Vec<InstanceSet>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg(format!("subset fraction {fraction} is outside (0, 1]")));
    }
    let size = libm::round(fraction * train.len() as f64) as usize;
    if size == 0 {
        return Err(Error::arg("random subsets would be empty"));
    }
    let ids: Vec<InstanceId> = train.ids().collect();
    (0..k)
        .map(|_| {
            let chosen: BTreeSet<InstanceId> = sample(rng, ids.len(), size).into_iter().map(|i| ids[i]).collect();
            train.subset(&chosen, SetRole::RandomSubset)
        })
        .collect()
}

/// One instance-specific agent per test instance, each trained with the full
/// step budget on its own instance using stream `rng.derive("isa-{id}")`.
pub fn train_isa(
    env_config: &EnvConfig,
    test: &InstanceSet,
    config: &PpoConfig,
    rng: &RngStream,
) -> Result<Vec<(InstanceId, TrainOutcome)>> {
    if test.is_empty() {
        return Err(Error::arg("ISA training needs a non-empty test set"));
    }
    test.instances()
        .iter()
        .map(|inst| train_single_isa(env_config, test, inst.id, config, rng).map(|o| (inst.id, o)))
        .collect()
}

/// The ISA of a single test instance.
pub fn train_single_isa(
    env_config: &EnvConfig,
    test: &InstanceSet,
    id: InstanceId,
    config: &PpoConfig,
    rng: &RngStream,
) -> Result<TrainOutcome> {
    let only: BTreeSet<InstanceId> = [id].into_iter().collect();
    let set = test.subset(&only, SetRole::Test)?;
    let mut stream = rng.derive(&format!("isa-{id}"));
    train(env_config, &set, config, &mut stream)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    /// Number of normalized (instance, run) scores aggregated.
    pub scores: usize,
    pub mean: Estimate,
    pub median: Estimate,
    pub iqm: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSizes {
    pub label: String,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seed: u64,
    pub n_boot: usize,
    pub test_instances: usize,
    pub policies: Vec<PolicyAggregate>,
    pub subset_sizes: Vec<SubsetSizes>,
}

impl AggregateReport {
    pub fn policy(&self, label: &str) -> Option<&PolicyAggregate> {
        self.policies.iter().find(|p| p.policy == label)
    }
}

/// Normalize all policies jointly per instance and bootstrap each policy's
/// mean, median and IQM over its pooled (instance, run) scores.
///
/// Every policy must have at least one score on every test instance, and
/// no score may refer to an instance outside the test set.
pub fn build_report(
    table: &PolicyScoreTable,
    test_ids: &BTreeSet<InstanceId>,
    subset_sizes: Vec<SubsetSizes>,
    n_boot: usize,
    rng: &RngStream,
) -> Result<AggregateReport> {
    if table.rows().is_empty() {
        return Err(Error::Report("no scores to report".into()));
    }
    let mut gaps = Vec::new();
    for policy in table.policies() {
        let covered: BTreeSet<InstanceId> =
            table.rows().iter().filter(|r| r.policy == policy).map(|r| r.instance_id).collect();
        let missing: Vec<_> = test_ids.difference(&covered).collect();
        let extra: Vec<_> = covered.difference(test_ids).collect();
        if !missing.is_empty() {
            gaps.push(format!("{policy} lacks instances {missing:?}"));
        }
        if !extra.is_empty() {
            gaps.push(format!("{policy} has scores for non-test instances {extra:?}"));
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Report(gaps.join("; ")));
    }
    let normalized = normalize_per_instance(table);
    let policies = normalized
        .policies()
        .into_iter()
        .map(|policy| {
            let values = normalized.values_of(&policy);
            let est = |stat: Statistic| {
                let mut stream = rng.derive(&format!("bootstrap/{policy}/{stat}"));
                bootstrap_statistic(&values, stat, n_boot, &mut stream)
            };
            Ok(PolicyAggregate {
                scores: values.len(),
                mean: est(Statistic::Mean)?,
                median: est(Statistic::Median)?,
                iqm: est(Statistic::Iqm)?,
                policy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport { seed: rng.root_seed(), n_boot, test_instances: test_ids.len(), policies, subset_sizes })
}
