//! Artifact file formats.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use instsel_core::agent::{PolicyParameters, TrainLogEntry};
use instsel_core::env::cmaes::CmaesInstance;
use instsel_core::env::sigmoid::SigmoidInstance;
use instsel_core::features::InstanceRepresentation;
use instsel_core::selector::GraphStats;
use instsel_core::stats::{AggregateReport, ScoreRow};
use instsel_core::{Benchmark, EpisodeTrajectory, Instance, InstanceId, InstanceKind, InstanceSet, SetRole};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT: &str = "instsel-policy";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const SELECTION_VERSION: u32 = 1;

const SIGMOID_HEADER: [&str; 5] = ["id", "shift_0", "slope_0", "shift_1", "slope_1"];
const CMAES_HEADER: [&str; 4] = ["id", "function_id", "bbob_instance_id", "dimension"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::Reader::from_reader(open(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_instances(path: &Path, set: &InstanceSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    match set.benchmark() {
        Some(Benchmark::Cmaes) => w.write_record(CMAES_HEADER)?,
        _ => w.write_record(SIGMOID_HEADER)?,
    }
    for inst in set.instances() {
        let row: Vec<String> = match &inst.kind {
            InstanceKind::Sigmoid(p) => vec![
                inst.id.to_string(),
                p.shifts[0].to_string(),
                p.slopes[0].to_string(),
                p.shifts[1].to_string(),
                p.slopes[1].to_string(),
            ],
            InstanceKind::Cmaes(p) => vec![
                inst.id.to_string(),
                p.function_id.to_string(),
                p.bbob_instance_id.to_string(),
                p.dimension.to_string(),
            ],
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances(path: &Path, role: SetRole) -> Result<InstanceSet> {
    let mut r = csv_reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut instances = Vec::new();
    let parse_err = |line: usize| format!("{} line {}", path.display(), line + 2);
    if header == SIGMOID_HEADER {
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let f = |k: usize| -> Result<f64> { rec[k].trim().parse::<f64>().with_context(|| parse_err(i)) };
            let id: u32 = rec[0].trim().parse().with_context(|| parse_err(i))?;
            let p = SigmoidInstance::new([f(1)?, f(3)?], [f(2)?, f(4)?]);
            p.validate().with_context(|| parse_err(i))?;
            instances.push(Instance::sigmoid(id, p));
        }
    } else if header == CMAES_HEADER {
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let u = |k: usize| -> Result<u32> { rec[k].trim().parse::<u32>().with_context(|| parse_err(i)) };
            let p = CmaesInstance { function_id: u(1)?, bbob_instance_id: u(2)?, dimension: u(3)? as usize };
            p.validate().with_context(|| parse_err(i))?;
            instances.push(Instance::cmaes(u(0)?, p));
        }
    } else {
        bail!("{}: unrecognized instance header {:?}", path.display(), header);
    }
    ensure!(!instances.is_empty(), "{} holds no instances", path.display());
    Ok(InstanceSet::new(role, instances)?)
}

/// One JSON object per line.
pub fn write_trajectories(path: &Path, trajectories: &[EpisodeTrajectory]) -> Result<()> {
    let mut w = create(path)?;
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<EpisodeTrajectory>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: EpisodeTrajectory =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(
            EpisodeTrajectory::new(t.instance_id, t.episode, t.actions, t.rewards)
                .with_context(|| format!("{} line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

pub fn write_features(path: &Path, names: &[String], reps: &[InstanceRepresentation]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["instance_id".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for r in reps {
        ensure!(r.vector.len() == names.len(), "instance {} has {} features", r.instance_id, r.vector.len());
        let mut row = vec![r.instance_id.to_string()];
        row.extend(r.vector.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Vec<InstanceRepresentation>)> {
    let mut r = csv_reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    ensure!(
        header.first().map(String::as_str) == Some("instance_id"),
        "{}: missing instance_id column",
        path.display()
    );
    let names = header[1..].to_vec();
    let mut reps = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("{} line {}", path.display(), i + 2);
        let id: u32 = rec[0].parse().with_context(ctx)?;
        let vector = rec.iter().skip(1).map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>().with_context(ctx)?;
        ensure!(vector.len() == names.len(), "{}: wrong column count", ctx());
        reps.push(InstanceRepresentation { instance_id: InstanceId(id), vector });
    }
    Ok((names, reps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub benchmark: Benchmark,
    pub policy: PolicyParameters,
}

pub fn save_policy(path: &Path, benchmark: Benchmark, policy: &PolicyParameters) -> Result<()> {
    write_json(
        path,
        &Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            benchmark,
            policy: policy.clone(),
        },
    )
}

pub fn load_policy(path: &Path) -> Result<Checkpoint> {
    let c: Checkpoint = read_json(path)?;
    ensure!(
        c.format == CHECKPOINT_FORMAT && c.version == CHECKPOINT_VERSION,
        "{}: unsupported checkpoint {} v{}",
        path.display(),
        c.format,
        c.version
    );
    ensure!(c.policy.is_finite(), "{}: non-finite weights", path.display());
    Ok(c)
}

pub fn write_train_log(path: &Path, log: &[TrainLogEntry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["update", "steps", "mean_return"])?;
    for e in log {
        let ret = e.mean_return.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([e.update.to_string(), e.steps.to_string(), ret])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorEcho {
    pub method: String,
    pub spec: String,
    pub threshold: f64,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEcho {
    pub fraction: f64,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSubset {
    pub repetition: usize,
    pub size: usize,
    pub instance_ids: Vec<InstanceId>,
}

/// Subsets of a train set chosen either by the selector (with the graph
/// statistics) or uniformly at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub version: u32,
    pub label: String,
    pub train_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphStats>,
    pub subsets: Vec<SelectedSubset>,
}

impl SelectionFile {
    pub fn load(path: &Path) -> Result<Self> {
        let f: SelectionFile = read_json(path)?;
        ensure!(f.version == SELECTION_VERSION, "{}: unsupported selection version {}", path.display(), f.version);
        Ok(f)
    }

    pub fn role(&self) -> SetRole {
        if self.random.is_some() {
            SetRole::RandomSubset
        } else {
            SetRole::Selected
        }
    }

    /// Subset `repetition` as an instance set drawn from `train`.
    pub fn subset(&self, train: &InstanceSet, repetition: usize) -> Result<InstanceSet> {
        let s = self
            .subsets
            .iter()
            .find(|s| s.repetition == repetition)
            .with_context(|| format!("selection {} has no repetition {repetition}", self.label))?;
        let ids = s.instance_ids.iter().copied().collect();
        train.subset(&ids, self.role()).with_context(|| format!("selection {} does not fit the train set", self.label))
    }
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["policy", "instance_id", "seed", "repetition", "value"])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.instance_id.to_string(),
            r.seed.to_string(),
            r.repetition.to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv_reader(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("{} line {}", path.display(), i + 2);
        ensure!(rec.len() == 5, "{}: expected 5 columns", ctx());
        rows.push(ScoreRow {
            policy: rec[0].to_string(),
            instance_id: InstanceId(rec[1].parse().with_context(ctx)?),
            seed: rec[2].parse().with_context(ctx)?,
            repetition: rec[3].parse().with_context(ctx)?,
            value: rec[4].parse().with_context(ctx)?,
        });
    }
    Ok(rows)
}

/// Flat per-policy statistics: one row per (policy, statistic).
pub fn write_report_csv(path: &Path, report: &AggregateReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["policy", "statistic", "point", "ci_low", "ci_high", "scores"])?;
    for p in &report.policies {
        for (name, e) in [("mean", &p.mean), ("median", &p.median), ("iqm", &p.iqm)] {
            w.write_record([
                p.policy.clone(),
                name.to_string(),
                e.point.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
                p.scores.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
