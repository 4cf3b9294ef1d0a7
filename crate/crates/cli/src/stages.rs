//! Pipeline stages. Each stage reads its inputs from files and writes its
//! outputs to files, so any stage can be rerun on its own.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use instsel_core::agent::{evaluate_instance, evaluate_rollouts, train, PpoConfig, TrainOutcome};
use instsel_core::env::cmaes::{cmaes_test_set, cmaes_train_set};
use instsel_core::env::sigmoid::{sample_sigmoid_instances_with, SigmoidSampling};
use instsel_core::env::EnvConfig;
use instsel_core::features::{
    build_instance_representation, feature_names, InstanceRepresentation, RepresentationSpec,
};
use instsel_core::selector::{select_instances, SelectionConfig};
use instsel_core::stats::{build_report, random_subsets, AggregateReport, PolicyScoreTable, ScoreRow, SubsetSizes};
use instsel_core::{derive_rng_stream, Benchmark, EpisodeTrajectory, InstanceId, InstanceSet, SetRole};
use rayon::prelude::*;

use crate::io::{self, RandomEcho, SelectedSubset, SelectionFile, SelectorEcho, SELECTION_VERSION};

pub const POLICY_FILE: &str = "policy.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

fn role_name(role: SetRole) -> &'static str {
    match role {
        SetRole::Train => "train",
        SetRole::Test => "test",
        SetRole::Selected => "selected",
        SetRole::RandomSubset => "random_subset",
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "{} does not exist", path.display());
    Ok(())
}

/// Sigmoid: `n` instances with ids from `first_id`, drawn from stream
/// `instances/{role}`. CMA-ES: the fixed train or test grid (`n` unused).
pub fn gen_instances(
    benchmark: Benchmark,
    n: usize,
    first_id: u32,
    seed: u64,
    role: SetRole,
    dimension: usize,
) -> Result<InstanceSet> {
    Ok(match (benchmark, role) {
        (Benchmark::Sigmoid, _) => {
            let mut rng = derive_rng_stream(seed, &format!("instances/{}", role_name(role)));
            sample_sigmoid_instances_with(n, first_id, &SigmoidSampling::default(), role, &mut rng)?
        }
        (Benchmark::Cmaes, SetRole::Test) => cmaes_test_set(dimension)?,
        (Benchmark::Cmaes, SetRole::Train) => cmaes_train_set(dimension)?,
        (Benchmark::Cmaes, r) => bail!("cannot generate a {} set", role_name(r)),
    })
}

/// Load the train set, optionally narrowed to one subset of a selection file.
pub fn load_training_set(instances: &Path, subset: Option<(&Path, usize)>) -> Result<InstanceSet> {
    require_file(instances)?;
    let train = io::read_instances(instances, SetRole::Train)?;
    match subset {
        None => Ok(train),
        Some((sel, rep)) => {
            require_file(sel)?;
            SelectionFile::load(sel)?.subset(&train, rep)
        }
    }
}

/// Train with stream `train/{label}` and write the checkpoint and log to
/// `out_dir`.
pub fn train_stage(
    set: &InstanceSet,
    env: &EnvConfig,
    ppo: &PpoConfig,
    seed: u64,
    label: &str,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let benchmark = set.benchmark().context("empty training set")?;
    let mut rng = derive_rng_stream(seed, &format!("train/{label}"));
    let outcome = train(env, set, ppo, &mut rng).with_context(|| format!("training {label}"))?;
    io::save_policy(&out_dir.join(POLICY_FILE), benchmark, &outcome.policy)?;
    io::write_train_log(&out_dir.join(TRAIN_LOG_FILE), &outcome.log)?;
    Ok(outcome)
}

/// ISA for one test instance, trained with stream `train/ISA` derived by
/// instance id.
pub fn train_isa_stage(
    test: &InstanceSet,
    id: InstanceId,
    env: &EnvConfig,
    ppo: &PpoConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let benchmark = test.benchmark().context("empty test set")?;
    let root = derive_rng_stream(seed, "train/ISA");
    let outcome = instsel_core::stats::train_single_isa(env, test, id, ppo, &root)?;
    io::save_policy(&out_dir.join(POLICY_FILE), benchmark, &outcome.policy)?;
    io::write_train_log(&out_dir.join(TRAIN_LOG_FILE), &outcome.log)?;
    Ok(outcome)
}

fn load_policy_for(policy: &Path, set: &InstanceSet) -> Result<instsel_core::agent::PolicyParameters> {
    require_file(policy)?;
    let ckpt = io::load_policy(policy)?;
    ensure!(
        Some(ckpt.benchmark) == set.benchmark(),
        "policy {} was trained on {} instances",
        policy.display(),
        ckpt.benchmark.name()
    );
    Ok(ckpt.policy)
}

/// Roll out a policy on every instance (stream `rollout/{label}`) and write
/// the trajectories as JSON lines.
pub fn rollout_stage(
    policy: &Path,
    instances: &Path,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
    label: &str,
    out: &Path,
) -> Result<Vec<EpisodeTrajectory>> {
    require_file(instances)?;
    let set = io::read_instances(instances, SetRole::Train)?;
    let policy = load_policy_for(policy, &set)?;
    let rng = derive_rng_stream(seed, &format!("rollout/{label}"));
    let rollouts: Vec<_> = set
        .instances()
        .par_iter()
        .map(|inst| evaluate_instance(&policy, env, inst, episodes, &rng))
        .collect::<Result<_, _>>()?;
    let trajectories: Vec<EpisodeTrajectory> = rollouts.into_iter().flat_map(|r| r.trajectories).collect();
    io::write_trajectories(out, &trajectories)?;
    Ok(trajectories)
}

/// Build one representation per instance and write the feature matrix.
pub fn featurize_stage(
    trajectories: &Path,
    instances: &Path,
    spec: &RepresentationSpec,
    out: &Path,
) -> Result<Vec<InstanceRepresentation>> {
    require_file(trajectories)?;
    require_file(instances)?;
    let set = io::read_instances(instances, SetRole::Train)?;
    let benchmark = set.benchmark().context("empty instance set")?;
    let mut by_instance: BTreeMap<InstanceId, Vec<EpisodeTrajectory>> = BTreeMap::new();
    for t in io::read_trajectories(trajectories)? {
        by_instance.entry(t.instance_id).or_default().push(t);
    }
    if let Some(id) = by_instance.keys().find(|id| set.get(**id).is_none()) {
        bail!("trajectory for instance {id}, which is not in {}", instances.display());
    }
    let reps: Vec<InstanceRepresentation> = set
        .instances()
        .par_iter()
        .map(|inst| {
            let trajs = by_instance.get(&inst.id).map(Vec::as_slice).unwrap_or(&[]);
            build_instance_representation(trajs, spec, inst)
        })
        .collect::<Result<_, _>>()?;
    io::write_features(out, &feature_names(benchmark, spec)?, &reps)?;
    Ok(reps)
}

/// Run the selector from a feature matrix (stream `select/{label}`).
pub fn select_stage(
    features: &Path,
    instances: &Path,
    config: &SelectionConfig,
    seed: u64,
    out: &Path,
) -> Result<SelectionFile> {
    require_file(features)?;
    require_file(instances)?;
    let train = io::read_instances(instances, SetRole::Train)?;
    let (_, reps) = io::read_features(features)?;
    let label = config.label();
    let rng = derive_rng_stream(seed, &format!("select/{label}"));
    let runs = select_instances(&reps, &train, config, &rng)?;
    let file = SelectionFile {
        version: SELECTION_VERSION,
        label,
        train_size: train.len(),
        selector: Some(SelectorEcho {
            method: config.method.to_string(),
            spec: config.spec.to_string(),
            threshold: config.threshold,
            repetitions: config.repetitions,
            seed,
        }),
        random: None,
        graph: runs.first().map(|r| r.graph),
        subsets: runs
            .iter()
            .map(|r| SelectedSubset {
                repetition: r.repetition,
                size: r.selected.len(),
                instance_ids: r.selected.ids().collect(),
            })
            .collect(),
    };
    io::write_json(out, &file)?;
    Ok(file)
}

pub fn random_label(fraction: f64) -> String {
    format!("random-{fraction}")
}

/// Uniform random subsets (stream `random-subsets`).
pub fn random_subset_stage(
    instances: &Path,
    fraction: f64,
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<SelectionFile> {
    require_file(instances)?;
    let train = io::read_instances(instances, SetRole::Train)?;
    let mut rng = derive_rng_stream(seed, "random-subsets");
    let subsets = random_subsets(&train, fraction, count, &mut rng)?;
    let file = SelectionFile {
        version: SELECTION_VERSION,
        label: random_label(fraction),
        train_size: train.len(),
        selector: None,
        random: Some(RandomEcho { fraction, count, seed }),
        graph: None,
        subsets: subsets
            .iter()
            .enumerate()
            .map(|(k, s)| SelectedSubset { repetition: k, size: s.len(), instance_ids: s.ids().collect() })
            .collect(),
    };
    io::write_json(out, &file)?;
    Ok(file)
}

/// Score a policy on test instances (stream `evaluate/{label}/rep{repetition}`).
/// With `only`, just that instance is scored (ISA evaluation).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_stage(
    policy: &Path,
    test: &InstanceSet,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
    label: &str,
    repetition: u32,
    only: Option<InstanceId>,
) -> Result<Vec<ScoreRow>> {
    let params = load_policy_for(policy, test)?;
    let rng = derive_rng_stream(seed, &format!("evaluate/{label}/rep{repetition}"));
    let targets = match only {
        None => test.clone(),
        Some(id) => test.subset(&[id].into_iter().collect(), SetRole::Test)?,
    };
    let rollouts = if targets.len() > 1 {
        targets
            .instances()
            .par_iter()
            .map(|inst| evaluate_instance(&params, env, inst, episodes, &rng))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        evaluate_rollouts(&params, env, &targets, episodes, &rng)?
    };
    Ok(rollouts
        .into_iter()
        .map(|r| ScoreRow {
            policy: label.to_string(),
            instance_id: r.instance_id,
            seed,
            repetition,
            value: r.mean_return,
        })
        .collect())
}

/// Aggregate a score table into the report files (stream `report`).
pub fn report_stage(
    scores: &Path,
    test_instances: &Path,
    selections: &[&Path],
    n_boot: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<AggregateReport> {
    require_file(scores)?;
    require_file(test_instances)?;
    let test = io::read_instances(test_instances, SetRole::Test)?;
    let table = PolicyScoreTable::new(io::read_scores(scores)?)?;
    let mut sizes: Vec<SubsetSizes> = Vec::new();
    for path in selections {
        require_file(path)?;
        let sel = SelectionFile::load(path)?;
        let entry = match sizes.iter_mut().find(|s| s.label == sel.label) {
            Some(e) => e,
            None => {
                sizes.push(SubsetSizes { label: sel.label.clone(), sizes: Vec::new() });
                sizes.last_mut().unwrap()
            }
        };
        entry.sizes.extend(sel.subsets.iter().map(|s| s.size));
    }
    let ids = test.ids().collect();
    let report = build_report(&table, &ids, sizes, n_boot, &derive_rng_stream(seed, "report"))?;
    io::write_json(&out_dir.join("report.json"), &report)?;
    io::write_report_csv(&out_dir.join("report.csv"), &report)?;
    Ok(report)
}
