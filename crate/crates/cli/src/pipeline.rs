//! End-to-end experiment over a fixed, versioned output layout:
//!
//! ```text
//! manifest.json                        layout version, config echo, artifact list
//! instances/{train,test}.csv
//! runs/run{r}/policies/full/           policy.json, train_log.csv
//! runs/run{r}/trajectories/train.jsonl full-set policy on the train set
//! runs/run{r}/features/{spec}.csv
//! runs/run{r}/selection/{label}.json   one per selector and one for random subsets
//! runs/run{r}/policies/{label}/rep{k}/ retrained policies
//! runs/run{r}/policies/ISA/{id}/       when enabled
//! runs/run{r}/scores.csv
//! scores.csv                           all runs
//! report.json, report.csv
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use instsel_core::features::RepresentationSpec;
use instsel_core::stats::{AggregateReport, ScoreRow};
use instsel_core::{InstanceId, InstanceSet, SetRole};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, StageContext};
use crate::io::{self, SelectionFile};
use crate::stages::{self, POLICY_FILE};

pub const LAYOUT_VERSION: u32 = 1;
pub const OUTPUT_ENV_VAR: &str = "INSTSEL_OUT";
pub const FULL_LABEL: &str = "full";
pub const ISA_LABEL: &str = "ISA";

/// Paths of every artifact under one output root.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train_instances(&self) -> PathBuf {
        self.root.join("instances/train.csv")
    }

    pub fn test_instances(&self) -> PathBuf {
        self.root.join("instances/test.csv")
    }

    pub fn run_dir(&self, run: usize) -> PathBuf {
        self.root.join(format!("runs/run{run}"))
    }

    pub fn policy_dir(&self, run: usize, label: &str) -> PathBuf {
        self.run_dir(run).join("policies").join(label)
    }

    pub fn subset_policy_dir(&self, run: usize, label: &str, rep: usize) -> PathBuf {
        self.policy_dir(run, label).join(format!("rep{rep}"))
    }

    pub fn isa_policy_dir(&self, run: usize, id: InstanceId) -> PathBuf {
        self.policy_dir(run, ISA_LABEL).join(id.to_string())
    }

    pub fn trajectories(&self, run: usize) -> PathBuf {
        self.run_dir(run).join("trajectories/train.jsonl")
    }

    pub fn features(&self, run: usize, spec: &RepresentationSpec) -> PathBuf {
        self.run_dir(run).join(format!("features/{spec}.csv"))
    }

    pub fn selection(&self, run: usize, label: &str) -> PathBuf {
        self.run_dir(run).join(format!("selection/{label}.json"))
    }

    pub fn run_scores(&self, run: usize) -> PathBuf {
        self.run_dir(run).join("scores.csv")
    }

    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Output root: explicit argument, then the config, then `$INSTSEL_OUT`,
/// then `instsel-out`.
pub fn resolve_output_root(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("instsel-out"))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    layout_version: u32,
    config: &'a ExperimentConfig,
    artifacts: Vec<String>,
}

/// A training job of one run: which policy, trained on which subset.
struct RetrainJob {
    label: String,
    repetition: usize,
    selection: PathBuf,
}

pub struct PipelineOutcome {
    pub layout: Layout,
    pub report: AggregateReport,
}

/// Run every stage in order. Stage failures name the stage; artifacts
/// written before the failure stay on disk.
pub fn run_pipeline(config: &ExperimentConfig, root: &Path) -> Result<PipelineOutcome, CliError> {
    config.validate()?;
    let layout = Layout::new(root);
    let env = config.env;
    let ppo = config.ppo_config();
    let selectors = config.selection_configs()?;
    let episodes = config.evaluation.episodes;

    info!("gen-instances");
    let (train_path, test_path) = (layout.train_instances(), layout.test_instances());
    prepare_instances(config, &train_path, &test_path).stage("gen-instances")?;
    let test = io::read_instances(&test_path, SetRole::Test).stage("gen-instances")?;

    let mut all_scores: Vec<ScoreRow> = Vec::new();
    let mut selection_files: Vec<PathBuf> = Vec::new();
    for run in 0..config.runs {
        let seed = config.run_seed(run);
        info!("run {run} (seed {seed}): train");
        let full_dir = layout.policy_dir(run, FULL_LABEL);
        let train_set = stages::load_training_set(&train_path, None).stage("train")?;
        stages::train_stage(&train_set, &env, &ppo, seed, FULL_LABEL, &full_dir).stage("train")?;

        info!("run {run}: rollout");
        let full_policy = full_dir.join(POLICY_FILE);
        let traj = layout.trajectories(run);
        stages::rollout_stage(&full_policy, &train_path, &env, episodes, seed, "train", &traj).stage("rollout")?;

        info!("run {run}: featurize");
        let mut specs: Vec<RepresentationSpec> = Vec::new();
        for s in &selectors {
            if !specs.contains(&s.spec) {
                specs.push(s.spec);
            }
        }
        specs
            .par_iter()
            .map(|spec| stages::featurize_stage(&traj, &train_path, spec, &layout.features(run, spec)).map(|_| ()))
            .collect::<anyhow::Result<()>>()
            .stage("featurize")?;

        info!("run {run}: select");
        let mut jobs = Vec::new();
        for s in &selectors {
            let out = layout.selection(run, &s.label());
            let file =
                stages::select_stage(&layout.features(run, &s.spec), &train_path, s, seed, &out).stage("select")?;
            jobs.extend(retrain_jobs(&file, &out));
            selection_files.push(out);
        }
        if config.baselines.random_subsets {
            let b = &config.baselines;
            let out = layout.selection(run, &stages::random_label(b.random_fraction));
            let file = stages::random_subset_stage(&train_path, b.random_fraction, b.random_count, seed, &out)
                .stage("select")?;
            jobs.extend(retrain_jobs(&file, &out));
            selection_files.push(out);
        }

        info!("run {run}: retrain {} subsets", jobs.len());
        jobs.par_iter()
            .map(|job| -> anyhow::Result<()> {
                let set = stages::load_training_set(&train_path, Some((&job.selection, job.repetition)))?;
                let label = format!("{}/rep{}", job.label, job.repetition);
                let dir = layout.subset_policy_dir(run, &job.label, job.repetition);
                stages::train_stage(&set, &env, &ppo, seed, &label, &dir)?;
                Ok(())
            })
            .collect::<anyhow::Result<()>>()
            .stage("retrain")?;
        if config.baselines.isa {
            info!("run {run}: ISA for {} test instances", test.len());
            test.ids()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&id| {
                    stages::train_isa_stage(&test, id, &env, &ppo, seed, &layout.isa_policy_dir(run, id)).map(|_| ())
                })
                .collect::<anyhow::Result<()>>()
                .stage("isa")?;
        }

        info!("run {run}: evaluate");
        let scores = evaluate_run(config, &layout, run, &test, &jobs).stage("evaluate")?;
        io::write_scores(&layout.run_scores(run), &scores).stage("evaluate")?;
        all_scores.extend(scores);
    }

    info!("report");
    io::write_scores(&layout.scores(), &all_scores).stage("report")?;
    let sel_refs: Vec<&Path> = selection_files.iter().map(PathBuf::as_path).collect();
    let report = stages::report_stage(
        &layout.scores(),
        &test_path,
        &sel_refs,
        config.evaluation.n_boot,
        config.seed,
        layout.root(),
    )
    .stage("report")?;
    write_manifest(config, &layout).stage("report")?;
    Ok(PipelineOutcome { layout, report })
}

fn prepare_instances(config: &ExperimentConfig, train_out: &Path, test_out: &Path) -> anyhow::Result<()> {
    let (train, test): (InstanceSet, InstanceSet) = match (&config.instances.train_path, &config.instances.test_path) {
        (Some(tr), Some(te)) => {
            stages::require_file(tr)?;
            stages::require_file(te)?;
            (io::read_instances(tr, SetRole::Train)?, io::read_instances(te, SetRole::Test)?)
        }
        _ => {
            let c = &config.instances;
            let n_train = c.n_train;
            let train = stages::gen_instances(config.benchmark, n_train, 0, config.seed, SetRole::Train, c.dimension)?;
            let test = stages::gen_instances(
                config.benchmark,
                c.n_test,
                n_train as u32,
                config.seed,
                SetRole::Test,
                c.dimension,
            )?;
            (train, test)
        }
    };
    anyhow::ensure!(
        train.benchmark() == Some(config.benchmark) && test.benchmark() == Some(config.benchmark),
        "instance files do not hold {} instances",
        config.benchmark.name()
    );
    let overlap: Vec<InstanceId> = test.ids().filter(|id| train.get(*id).is_some()).collect();
    anyhow::ensure!(overlap.is_empty(), "train and test sets share instance ids {overlap:?}");
    io::write_instances(train_out, &train)?;
    io::write_instances(test_out, &test)?;
    Ok(())
}

fn retrain_jobs(file: &SelectionFile, path: &Path) -> Vec<RetrainJob> {
    file.subsets
        .iter()
        .map(|s| RetrainJob { label: file.label.clone(), repetition: s.repetition, selection: path.to_path_buf() })
        .collect()
}

fn evaluate_run(
    config: &ExperimentConfig,
    layout: &Layout,
    run: usize,
    test: &InstanceSet,
    jobs: &[RetrainJob],
) -> anyhow::Result<Vec<ScoreRow>> {
    let seed = config.run_seed(run);
    let env = config.env;
    let episodes = config.evaluation.episodes;
    let mut targets: Vec<(String, u32, PathBuf, Option<InstanceId>)> =
        vec![(FULL_LABEL.into(), 0, layout.policy_dir(run, FULL_LABEL).join(POLICY_FILE), None)];
    for j in jobs {
        let dir = layout.subset_policy_dir(run, &j.label, j.repetition);
        targets.push((j.label.clone(), j.repetition as u32, dir.join(POLICY_FILE), None));
    }
    if config.baselines.isa {
        for id in test.ids() {
            targets.push((ISA_LABEL.into(), 0, layout.isa_policy_dir(run, id).join(POLICY_FILE), Some(id)));
        }
    }
    let per_target: Vec<Vec<ScoreRow>> = targets
        .par_iter()
        .map(|(label, rep, policy, only)| {
            stages::evaluate_stage(policy, test, &env, episodes, seed, label, *rep, *only)
                .with_context(|| format!("evaluating {label} rep {rep}"))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(per_target.into_iter().flatten().collect())
}

fn write_manifest(config: &ExperimentConfig, layout: &Layout) -> anyhow::Result<()> {
    let mut artifacts = Vec::new();
    collect_files(layout.root(), layout.root(), &mut artifacts)?;
    artifacts.retain(|a| a != "manifest.json");
    artifacts.sort();
    let echo = ExperimentConfig { output_dir: None, ..config.clone() };
    io::write_json(&layout.manifest(), &Manifest { layout_version: LAYOUT_VERSION, config: &echo, artifacts })
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> anyhow::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root)?;
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}
