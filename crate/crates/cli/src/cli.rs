//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use instsel_core::env::EnvConfig;
use instsel_core::features::RepresentationSpec;
use instsel_core::selector::{SelectionConfig, SelectionMethod};
use instsel_core::{Benchmark, InstanceId, SetRole};

use crate::config::ExperimentConfig;
use crate::error::{CliError, StageContext};
use crate::io;
use crate::pipeline::{resolve_output_root, run_pipeline};
use crate::stages;

#[derive(Debug, Parser)]
#[command(
    name = "instsel",
    version,
    about = "Trajectory-based instance subset selection for RL-based algorithm configuration"
)]
pub struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BenchmarkArg {
    Sigmoid,
    Cmaes,
}

impl From<BenchmarkArg> for Benchmark {
    fn from(b: BenchmarkArg) -> Self {
        match b {
            BenchmarkArg::Sigmoid => Benchmark::Sigmoid,
            BenchmarkArg::Cmaes => Benchmark::Cmaes,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Train,
    Test,
}

/// Settings shared by stages that step an environment.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config; supplies PPO and environment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<Option<ExperimentConfig>, CliError> {
        self.config.as_deref().map(ExperimentConfig::load).transpose()
    }

    fn seed(&self, config: Option<&ExperimentConfig>) -> Result<u64, CliError> {
        self.seed
            .or(config.map(|c| c.seed))
            .ok_or_else(|| CliError::usage("a seed is required (--seed or a config file)"))
    }

    fn env(&self, config: Option<&ExperimentConfig>) -> EnvConfig {
        config.map(|c| c.env).unwrap_or_default()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample (Sigmoid) or enumerate (CMA-ES) an instance set.
    GenInstances {
        #[arg(long, value_enum)]
        benchmark: BenchmarkArg,
        /// Number of Sigmoid instances.
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "train")]
        role: RoleArg,
        /// First instance id (Sigmoid).
        #[arg(long, default_value_t = 0)]
        first_id: u32,
        /// CMA-ES problem dimension.
        #[arg(long, default_value_t = 10)]
        dimension: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a PPO policy on an instance set or one of its subsets.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        instances: PathBuf,
        /// Selection file; trains on subset `--repetition` of it.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        /// Name of the training stream; the pipeline uses `full` and
        /// `<selection label>/rep<k>`.
        #[arg(long, default_value = "full")]
        label: String,
        /// Override the total environment steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory for policy.json and train_log.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a trained policy and store trajectories (JSON lines).
    Rollout {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value = "train")]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn trajectories into a feature matrix.
    Featurize {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// Representation such as `ts-R`, `ts-RA+I` or `raw-A`.
        #[arg(long, default_value = "ts-R")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select representative subsets from a feature matrix.
    Select {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// DS or MIS.
        #[arg(long, default_value = "MIS")]
        method: String,
        #[arg(long, default_value_t = 0.7)]
        threshold: f64,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Representation the features were built with (recorded in the output).
        #[arg(long, default_value = "ts-R")]
        spec: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a policy on test instances and write or append score rows.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// Policy label in the score table.
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 0)]
        repetition: u32,
        /// Score only this instance (ISA).
        #[arg(long)]
        instance_id: Option<u32>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Append to an existing score file instead of replacing it.
        #[arg(long)]
        append: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate scores into report.json and report.csv.
    Report {
        #[arg(long)]
        scores: PathBuf,
        /// Test instance file; every policy must cover all of it.
        #[arg(long)]
        instances: PathBuf,
        /// Selection files whose subset sizes go into the report.
        #[arg(long = "selection")]
        selections: Vec<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n_boot: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (else the config's output_dir, else $INSTSEL_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn role(r: RoleArg) -> SetRole {
    match r {
        RoleArg::Train => SetRole::Train,
        RoleArg::Test => SetRole::Test,
    }
}

fn parse_spec(s: &str) -> Result<RepresentationSpec, CliError> {
    s.parse().map_err(|e| CliError::usage(format!("--spec: {e}")))
}

/// Parse arguments and run. Clap errors map to exit code 1; help and
/// version requests succeed.
pub fn main_with_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.to_string())),
    };
    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("--jobs: {e}")))?;
    pool.install(|| execute(cli.command))
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenInstances { benchmark, n, seed, role: r, first_id, dimension, out } => {
            let set = stages::gen_instances(benchmark.into(), n, first_id, seed, role(r), dimension)
                .stage("gen-instances")?;
            io::write_instances(&out, &set).stage("gen-instances")?;
            println!("wrote {} instances to {}", set.len(), out.display());
        }
        Command::Train { run, instances, selection, repetition, label, steps, out } => {
            let config = run.load()?;
            let seed = run.seed(config.as_ref())?;
            let set =
                stages::load_training_set(&instances, selection.as_deref().map(|s| (s, repetition))).stage("train")?;
            let benchmark = set.benchmark().expect("instance files are non-empty");
            if let Some(c) = &config {
                if c.benchmark != benchmark {
                    return Err(CliError::usage("config benchmark does not match the instance file"));
                }
            }
            let mut ppo = config
                .as_ref()
                .map(ExperimentConfig::ppo_config)
                .unwrap_or_else(|| instsel_core::agent::PpoConfig::for_benchmark(benchmark));
            if let Some(s) = steps {
                ppo.total_env_steps = s;
            }
            ppo.validate().map_err(|e| CliError::usage(e.to_string()))?;
            let outcome =
                stages::train_stage(&set, &run.env(config.as_ref()), &ppo, seed, &label, &out).stage("train")?;
            println!("trained on {} instances for {} steps; wrote {}", set.len(), outcome.env_steps, out.display());
        }
        Command::Rollout { run, policy, instances, episodes, label, out } => {
            let config = run.load()?;
            let seed = run.seed(config.as_ref())?;
            let t = stages::rollout_stage(&policy, &instances, &run.env(config.as_ref()), episodes, seed, &label, &out)
                .stage("rollout")?;
            println!("wrote {} trajectories to {}", t.len(), out.display());
        }
        Command::Featurize { trajectories, instances, spec, out } => {
            let spec = parse_spec(&spec)?;
            let reps = stages::featurize_stage(&trajectories, &instances, &spec, &out).stage("featurize")?;
            println!("wrote {} representations to {}", reps.len(), out.display());
        }
        Command::Select { features, instances, method, threshold, repetitions, spec, seed, out } => {
            let method: SelectionMethod = method.parse().map_err(|e| CliError::usage(format!("--method: {e}")))?;
            let config = SelectionConfig { method, threshold, repetitions, spec: parse_spec(&spec)? };
            let file = stages::select_stage(&features, &instances, &config, seed, &out).stage("select")?;
            let sizes: Vec<usize> = file.subsets.iter().map(|s| s.size).collect();
            println!("{}: subset sizes {:?} of {}; wrote {}", file.label, sizes, file.train_size, out.display());
        }
        Command::Evaluate { run, policy, instances, label, repetition, instance_id, episodes, append, out } => {
            let config = run.load()?;
            let seed = run.seed(config.as_ref())?;
            stages::require_file(&instances).stage("evaluate")?;
            let test = io::read_instances(&instances, SetRole::Test).stage("evaluate")?;
            let mut rows = stages::evaluate_stage(
                &policy,
                &test,
                &run.env(config.as_ref()),
                episodes,
                seed,
                &label,
                repetition,
                instance_id.map(InstanceId),
            )
            .stage("evaluate")?;
            if append && out.exists() {
                let mut existing = io::read_scores(&out).stage("evaluate")?;
                existing.append(&mut rows);
                rows = existing;
            }
            io::write_scores(&out, &rows).stage("evaluate")?;
            println!("wrote {} score rows to {}", rows.len(), out.display());
        }
        Command::Report { scores, instances, selections, n_boot, seed, out_dir } => {
            let refs: Vec<&Path> = selections.iter().map(PathBuf::as_path).collect();
            let report = stages::report_stage(&scores, &instances, &refs, n_boot, seed, &out_dir).stage("report")?;
            print_report(&report);
        }
        Command::Pipeline { config, seed, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let root = resolve_output_root(out.as_deref(), &config);
            let outcome = run_pipeline(&config, &root)?;
            print_report(&outcome.report);
            println!("artifacts in {}", outcome.layout.root().display());
        }
    }
    Ok(())
}

fn print_report(report: &instsel_core::stats::AggregateReport) {
    println!("{:<24} {:>8} {:>24} {:>24}", "policy", "scores", "IQM [95% CI]", "mean [95% CI]");
    for p in &report.policies {
        println!(
            "{:<24} {:>8} {:>7.3} [{:.3}, {:.3}] {:>7.3} [{:.3}, {:.3}]",
            p.policy, p.scores, p.iqm.point, p.iqm.ci_low, p.iqm.ci_high, p.mean.point, p.mean.ci_low, p.mean.ci_high
        );
    }
    for s in &report.subset_sizes {
        println!("subset sizes {}: {:?}", s.label, s.sizes);
    }
}
