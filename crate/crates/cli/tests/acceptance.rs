//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use instsel::config::ExperimentConfig;
use instsel::io;
use instsel::pipeline::{run_pipeline, Layout, FULL_LABEL};
use instsel_core::agent::{
    evaluate_instance, ppo_loss, ppo_loss_and_grad, ActMode, PolicyHead, PolicyParameters, PpoConfig, PpoSample,
};
use instsel_core::env::cmaes::{CmaesEnv, CmaesInstance, CmaesParams, DEFAULT_BUDGET};
use instsel_core::env::sigmoid::{oracle_best_episode_reward, SigmoidInstance, STATE_DIM};
use instsel_core::env::{CmdpEnv, EnvConfig};
use instsel_core::features::{
    build_instance_representation, instance_features, raw_representation, representation_dim, standardize,
    ts_feature_vector, Channels, RepresentationSpec,
};
use instsel_core::selector::{
    greedy_dominating_set, greedy_maximal_independent_set, SimilarityGraph, THRESHOLDS,
};
use instsel_core::stats::{bootstrap_statistic, iqm, train_single_isa, Statistic};
use instsel_core::{
    derive_rng_stream, Benchmark, EpisodeTrajectory, Instance, InstanceId, InstanceKind, RngStream, SetRole,
};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

type Check = anyhow::Result<(bool, String)>;

const SIGMOID_E2E: &str = r#"
benchmark = "sigmoid"
seed = 1
runs = 5

[instances]
n_train = 300
n_test = 300

[[selectors]]
method = "MIS"
spec = "ts-R"
threshold = 0.7
repetitions = 5

[baselines]
random_subsets = false
"#;

const SMALL_PIPELINE: &str = r#"
benchmark = "sigmoid"
seed = 11
runs = 2

[instances]
n_train = 40
n_test = 20

[ppo]
total_env_steps = 1500

[[selectors]]
method = "MIS"
spec = "ts-R"
threshold = 0.7
repetitions = 3

[[selectors]]
method = "DS"
spec = "ts-RA+I"
threshold = 0.8
repetitions = 2

[baselines]
random_subsets = true
random_fraction = 0.25
random_count = 2

[evaluation]
episodes = 4
n_boot = 500
"#;

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let e2e_root = scratch.path().join("sigmoid-e2e");
    let mut all_pass = true;
    let mut report = |number: usize, name: &str, check: &mut dyn FnMut() -> Check| {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e:#}")),
            Err(_) => (false, "panicked".to_string()),
        };
        all_pass &= pass;
        println!("{} criterion {number} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    };
    report(1, "sigmoid end-to-end", &mut || sigmoid_end_to_end(&e2e_root));
    report(2, "ISA sanity bound", &mut || isa_sanity(&e2e_root));
    report(3, "graph algorithms vs exhaustive oracle", &mut graph_oracle);
    report(4, "threshold monotonicity", &mut || threshold_monotonicity(&e2e_root));
    report(5, "PPO gradient check", &mut gradient_check);
    report(6, "feature catalog examples", &mut feature_examples);
    report(7, "statistics", &mut statistics);
    report(8, "CMA-ES environment", &mut cmaes_environment);
    report(9, "pipeline determinism", &mut || pipeline_determinism(scratch.path()));
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn sigmoid_end_to_end(root: &Path) -> Check {
    let config = ExperimentConfig::from_toml(SIGMOID_E2E)?;
    let label = config.selection_configs()?[0].label();
    let start = Instant::now();
    let outcome = run_pipeline(&config, root).map_err(|e| anyhow::anyhow!("{e}"))?;
    let elapsed = start.elapsed();
    let full = outcome.report.policy(FULL_LABEL).expect("full policy in report").iqm.point;
    let sub = outcome.report.policy(&label).expect("subset policy in report").iqm.point;
    let sizes = &outcome.report.subset_sizes.iter().find(|s| s.label == label).expect("subset sizes").sizes;
    let sizes_ok = sizes.len() == 25 && sizes.iter().all(|&s| s < 300);
    let iqm_ok = sub >= full - 0.05;
    let time_ok = elapsed < Duration::from_secs(15 * 60);
    Ok((
        iqm_ok && sizes_ok && time_ok,
        format!(
            "IQM {label} {sub:.4} vs full {full:.4} (need >= {:.4}); subset sizes {}..={} over {} subsets; {:.0}s",
            full - 0.05,
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap(),
            sizes.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn sigmoid_params(inst: &Instance) -> SigmoidInstance {
    match &inst.kind {
        InstanceKind::Sigmoid(p) => *p,
        other => panic!("not a Sigmoid instance: {other:?}"),
    }
}

fn isa_sanity(e2e_root: &Path) -> Check {
    let config = ExperimentConfig::from_toml(SIGMOID_E2E)?;
    let layout = Layout::new(e2e_root);
    let test = io::read_instances(&layout.test_instances(), SetRole::Test)?;
    let oracle: BTreeMap<InstanceId, f64> =
        test.instances().iter().map(|i| (i.id, oracle_best_episode_reward(&sigmoid_params(i)))).collect();

    let env = EnvConfig::default();
    let ppo = config.ppo_config();
    let mut pick = derive_rng_stream(config.seed, "acceptance/isa-sample");
    let chosen: Vec<&Instance> = sample(&mut pick, test.len(), 20).into_iter().map(|i| &test.instances()[i]).collect();
    let root = derive_rng_stream(config.seed, "train/ISA");
    let mut good = 0;
    let mut isa_over = 0;
    for inst in &chosen {
        let out = train_single_isa(&env, &test, inst.id, &ppo, &root)?;
        let eval =
            evaluate_instance(&out.policy, &env, inst, 10, &derive_rng_stream(config.seed, "evaluate/ISA/rep0"))?;
        let o = oracle[&inst.id];
        if eval.mean_return > o + 1e-9 {
            isa_over += 1;
        }
        if eval.mean_return >= 0.9 * o {
            good += 1;
        }
    }

    let scores = io::read_scores(&layout.scores())?;
    let non_isa_over = scores.iter().filter(|r| r.value > oracle[&r.instance_id] + 1e-9).count();
    Ok((
        good >= 16 && non_isa_over == 0 && isa_over == 0 && !scores.is_empty(),
        format!(
            "ISA >= 0.9 x oracle on {good}/20; scores above oracle: {non_isa_over} of {} non-ISA, {isa_over} ISA",
            scores.len()
        ),
    ))
}

fn closed_masks(n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    let mut m: Vec<u32> = (0..n).map(|v| 1 << v).collect();
    for &(a, b) in edges {
        m[a] |= 1 << b;
        m[b] |= 1 << a;
    }
    m
}

fn exact_min_dominating(n: usize, closed: &[u32]) -> u32 {
    let full = (1u32 << n) - 1;
    (0u32..=full)
        .filter(|&mask| (0..n).filter(|v| mask >> v & 1 == 1).fold(0, |c, v| c | closed[v]) == full)
        .map(u32::count_ones)
        .min()
        .unwrap()
}

fn graph_oracle() -> Check {
    let mut graphs: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    for n in 1..=8usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        if pairs.len() <= 10 {
            for mask in 0u32..(1 << pairs.len()) {
                graphs
                    .push((n, pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect()));
            }
        } else {
            let mut rng = derive_rng_stream(n as u64, "acceptance/graphs");
            for _ in 0..300 {
                let p: f64 = rng.random();
                graphs.push((n, pairs.iter().copied().filter(|_| rng.random::<f64>() < p).collect()));
            }
        }
    }
    let mut failures = 0;
    let mut checks = 0;
    for (g, (n, edges)) in graphs.iter().enumerate() {
        let graph = SimilarityGraph::from_edges(*n, edges);
        let closed = closed_masks(*n, edges);
        let bound = exact_min_dominating(*n, &closed) as f64 * (1.0 + (*n as f64).ln());
        let adjacent = |a: usize, b: usize| closed[a] >> b & 1 == 1 && a != b;
        for t in 0..3 {
            let mut rng = derive_rng_stream(g as u64, &format!("acceptance/tie-{t}"));
            let ds: Vec<usize> = greedy_dominating_set(&graph, &mut rng).iter().map(|id| id.0 as usize).collect();
            let cover = ds.iter().fold(0u32, |c, &v| c | closed[v]);
            let ds_ok = cover == (1u32 << n) - 1 && ds.len() as f64 <= bound + 1e-12;
            let mis: Vec<usize> =
                greedy_maximal_independent_set(&graph, &mut rng).iter().map(|id| id.0 as usize).collect();
            let independent = mis.iter().all(|&a| mis.iter().all(|&b| !adjacent(a, b)));
            let maximal = (0..*n).all(|v| mis.contains(&v) || mis.iter().any(|&u| adjacent(u, v)));
            checks += 1;
            if !(ds_ok && independent && maximal) {
                failures += 1;
            }
        }
    }
    Ok((
        failures == 0 && graphs.len() >= 500,
        format!("{} graphs with n <= 8, {checks} tie-break streams, {failures} failures", graphs.len()),
    ))
}

fn edge_counts(rows: &[Vec<f64>]) -> anyhow::Result<Vec<usize>> {
    let ids: Vec<InstanceId> = (0..rows.len() as u32).map(InstanceId).collect();
    THRESHOLDS.iter().map(|&t| Ok(SimilarityGraph::build(ids.clone(), rows, t)?.edge_count())).collect()
}

fn threshold_monotonicity(e2e_root: &Path) -> Check {
    let mut matrices: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut rng = derive_rng_stream(4, "acceptance/matrices");
    for _ in 0..300 {
        let n = rng.random_range(2..40);
        let d = rng.random_range(1..30);
        let offset: f64 = rng.random_range(-1.0..3.0);
        let mut m: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| offset + rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        // near-duplicate and rescaled rows put many pairs close to the thresholds
        for i in 1..n {
            if rng.random::<f64>() < 0.3 {
                let scale = rng.random_range(0.1..10.0);
                let noise = rng.random_range(0.0..0.5);
                m[i] = m[i - 1].iter().map(|v| scale * v + noise * rng.sample::<f64, _>(StandardNormal)).collect();
            }
        }
        if m.iter().all(|r| r.iter().any(|v| *v != 0.0)) {
            matrices.push(m);
        }
    }
    let mut real = 0;
    let spec: RepresentationSpec = "ts-R".parse()?;
    for run in 0..5 {
        let path = Layout::new(e2e_root).features(run, &spec);
        if path.is_file() {
            let (_, reps) = io::read_features(&path)?;
            let rows: Vec<Vec<f64>> = reps.into_iter().map(|r| r.vector).collect();
            matrices.push(standardize(&rows)?);
            real += 1;
        }
    }
    let mut violations = 0;
    for m in &matrices {
        let c = edge_counts(m)?;
        if c.windows(2).any(|w| w[0] < w[1]) {
            violations += 1;
        }
    }
    Ok((
        violations == 0,
        format!("{} matrices ({real} from pipeline features), {violations} violations", matrices.len()),
    ))
}

fn random_state(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn gradient_probes(head: PolicyHead, state_dim: usize, seed: u64) -> usize {
    let mut rng = derive_rng_stream(seed, "acceptance/grad");
    let mut policy = PolicyParameters::new(state_dim, head, &[64, 64], &mut rng);
    let mut params = policy.flat_params();
    for p in params.iter_mut() {
        *p += 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    policy.set_flat_params(&params);
    let samples: Vec<PpoSample> = (0..64)
        .map(|_| {
            let state = random_state(state_dim, &mut rng);
            let out = policy.act(&state, &mut rng, ActMode::Sample).unwrap();
            PpoSample {
                obs: policy.obs_norm.normalize(&state),
                raw_action: out.raw,
                old_log_prob: out.raw_log_prob + 0.15 * rng.sample::<f64, _>(StandardNormal),
                advantage: rng.sample::<f64, _>(StandardNormal),
                ret: 2.0 * rng.sample::<f64, _>(StandardNormal),
            }
        })
        .collect();
    let batch: Vec<&PpoSample> = samples.iter().collect();
    let config = PpoConfig::default();
    let (_, grad) = ppo_loss_and_grad(&policy, &batch, &config);
    let h = 1e-6;
    let mut passed = 0;
    for _ in 0..100 {
        let i = rng.random_range(0..params.len());
        let mut probe = policy.clone();
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_flat_params(&p);
        let up = ppo_loss(&probe, &batch, &config);
        p[i] = params[i] - h;
        probe.set_flat_params(&p);
        let down = ppo_loss(&probe, &batch, &config);
        let numeric = (up - down) / (2.0 * h);
        if (grad[i] - numeric).abs() <= 1e-4 * grad[i].abs().max(numeric.abs()).max(1e-8) {
            passed += 1;
        }
    }
    passed
}

fn gradient_check() -> Check {
    let mut per_head = Vec::new();
    for (name, head, dim) in [
        ("categorical", PolicyHead::Categorical { cardinalities: vec![5, 10] }, STATE_DIM),
        ("gaussian", PolicyHead::SquashedGaussian { low: vec![0.0], high: vec![10.0] }, 5),
    ] {
        let passed: usize = (0..3).map(|seed| gradient_probes(head.clone(), dim, seed)).sum();
        per_head.push((name, passed));
    }
    let passed: usize = per_head.iter().map(|(_, p)| p).sum();
    let total = 100 * 3 * per_head.len();
    let detail: Vec<String> = per_head.iter().map(|(n, p)| format!("{n} {p}/300")).collect();
    Ok((
        passed * 100 >= 99 * total,
        format!("{passed}/{total} probed weights within 1e-4 relative error ({})", detail.join(", ")),
    ))
}

fn feature_examples() -> Check {
    let mut failed: Vec<&str> = Vec::new();
    let mut expect = |ok: bool, name: &'static str| {
        if !ok {
            failed.push(name);
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;

    let c = ts_feature_vector(&[3.0; 4])?;
    expect(c[0] == 3.0 && c[1] == 0.0 && c[10] == 0.0, "constant mean/std/slope");
    expect([6, 7, 8, 9].iter().all(|&i| c[i] == 0.0), "constant autocorrelation");

    let ramp: Vec<f64> = (0..10).map(f64::from).collect();
    let r = ts_feature_vector(&ramp)?;
    expect(close(r[10], 1.0) && close(r[0], 4.5) && close(r[11], 1.0), "ramp slope/mean/R2");

    let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    expect(close(ts_feature_vector(&alt)?[6], -1.0), "alternating lag-1 ACF");

    let actions: Vec<Vec<f64>> = (0..10).map(|t| vec![(t % 5) as f64, (t % 10) as f64]).collect();
    let rewards: Vec<f64> = (0..10).map(|t| 0.1 * t as f64).collect();
    let traj = EpisodeTrajectory::new(InstanceId(7), 0, actions.clone(), rewards.clone())?;
    expect(raw_representation(&traj, Channels::A).len() == 20, "raw A length");
    let ra = raw_representation(&traj, Channels::RA);
    expect(ra.len() == 30 && ra[20..] == rewards[..], "raw RA layout");

    let sig = Instance::sigmoid(7, SigmoidInstance::new([2.0, 8.0], [1.0, -3.0]));
    expect(instance_features(&sig) == vec![2.0, 1.0, 8.0, -3.0], "sigmoid instance features");
    let other = Instance::sigmoid(8, SigmoidInstance::new([2.0, 8.0], [1.0, -2.5]));
    expect(instance_features(&sig) != instance_features(&other), "instance features injective");
    let cma = Instance::cmaes(0, CmaesInstance { function_id: 3, bbob_instance_id: 1, dimension: 10 });
    let onehot = instance_features(&cma);
    expect(onehot[2] == 1.0 && onehot[..10].iter().sum::<f64>() == 1.0, "CMA-ES one-hot");

    let ra_i: RepresentationSpec = "ts-RA+I".parse()?;
    expect(representation_dim(Benchmark::Sigmoid, &ra_i)? == 76, "ts-RA+I dimension");
    let single = build_instance_representation(std::slice::from_ref(&traj), &ra_i, &sig)?;
    let repeated: Vec<EpisodeTrajectory> =
        (0..10).map(|e| EpisodeTrajectory::new(InstanceId(7), e, actions.clone(), rewards.clone()).unwrap()).collect();
    let avg = build_instance_representation(&repeated, &ra_i, &sig)?;
    expect(
        single.vector.iter().zip(&avg.vector).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())),
        "identical episodes average",
    );
    let zeros: Vec<EpisodeTrajectory> =
        (0..10).map(|e| EpisodeTrajectory::new(InstanceId(7), e, actions.clone(), vec![0.0; 10]).unwrap()).collect();
    let z = build_instance_representation(&zeros, &"ts-R".parse()?, &sig)?;
    expect(z.vector == ts_feature_vector(&[0.0; 10])?.to_vec(), "zero rewards");

    let s = standardize(&[vec![1.0, 4.0], vec![2.0, 4.0], vec![3.0, 4.0]])?;
    let zs = (1.5f64).sqrt();
    expect((s[0][0] + zs).abs() < 1e-12 && s[1][0] == 0.0 && (s[2][0] - zs).abs() < 1e-12, "standardize [1,2,3]");
    expect(s.iter().all(|r| r[1] == 0.0), "standardize constant column");

    let ok = failed.is_empty();
    Ok((ok, if ok { "all examples exact".to_string() } else { format!("failed: {}", failed.join(", ")) }))
}

fn statistics() -> Check {
    let v: Vec<f64> = (1..=8).map(f64::from).collect();
    let iqm_ok = iqm(&v)? == 4.5;

    let constant = vec![0.37; 50];
    let mut zero_width = true;
    for stat in Statistic::ALL {
        let e = bootstrap_statistic(&constant, stat, 5000, &mut derive_rng_stream(3, "acceptance/boot"))?;
        zero_width &= e.ci_low == e.point && e.point == e.ci_high;
    }

    let mut rng = derive_rng_stream(7, "acceptance/values");
    let values: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
    let mut identical = true;
    for stat in Statistic::ALL {
        let a = bootstrap_statistic(&values, stat, 5000, &mut derive_rng_stream(9, "acceptance/boot"))?;
        let b = bootstrap_statistic(&values, stat, 5000, &mut derive_rng_stream(9, "acceptance/boot"))?;
        identical &=
            [a.point, a.ci_low, a.ci_high].map(f64::to_bits) == [b.point, b.ci_low, b.ci_high].map(f64::to_bits);
    }
    Ok((
        iqm_ok && zero_width && identical,
        format!(
            "iqm([1..8]) == 4.5: {iqm_ok}; constant CI zero-width: {zero_width}; same-seed bit-identical: {identical}"
        ),
    ))
}

fn cma_episode(function_id: u32, seed: u64, mut sigma: impl FnMut() -> f64) -> anyhow::Result<Vec<f64>> {
    let inst = Instance::cmaes(0, CmaesInstance { function_id, bbob_instance_id: 1, dimension: 10 });
    let mut env = CmaesEnv::new(DEFAULT_BUDGET);
    env.reset(&inst, seed)?;
    let mut rewards = Vec::new();
    loop {
        let tr = env.step(&[sigma()])?;
        rewards.push(tr.reward);
        if tr.done {
            return Ok(rewards);
        }
    }
}

fn cmaes_environment() -> Check {
    let mut schedule = derive_rng_stream(8, "acceptance/sigma");
    let mut monotone = 0;
    for seed in 0..100u64 {
        let fid = (seed % 10) as u32 + 1;
        let r = cma_episode(fid, seed, || 10f64.powf(schedule.random_range(-4.0..1.0)))?;
        if r.windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
    }
    let mut improved = 0;
    for seed in 0..100u64 {
        let r = cma_episode(1, seed, || 0.5)?;
        if r.last().unwrap() > &r[0] {
            improved += 1;
        }
    }
    let lambda = CmaesParams::new(10).lambda;
    Ok((
        monotone == 100 && improved >= 95 && lambda == 10,
        format!("monotone rewards {monotone}/100; sphere improved {improved}/100; lambda {lambda}"),
    ))
}

fn files_under(root: &Path) -> anyhow::Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root)?.to_path_buf(), std::fs::read(&path)?);
            }
        }
    }
    Ok(out)
}

fn pipeline_determinism(scratch: &Path) -> Check {
    let dir = scratch.join("determinism");
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("config.toml");
    std::fs::write(&config, SMALL_PIPELINE)?;
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_instsel"))
            .args(["pipeline", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "warn")
            .status()?;
        anyhow::ensure!(status.success(), "pipeline run {name} exited with {status}");
        trees.push(files_under(&out)?);
    }
    let (a, b) = (&trees[0], &trees[1]);
    let key = |p: &PathBuf| {
        let s = p.to_string_lossy();
        s.contains("/features/") || s.contains("/selection/") || s.starts_with("report.")
    };
    let compared: BTreeSet<&PathBuf> = a.keys().filter(|p| key(p)).collect();
    let differing: Vec<String> =
        a.keys().chain(b.keys()).filter(|p| a.get(*p) != b.get(*p)).map(|p| p.display().to_string()).collect();
    let has_all = compared.iter().any(|p| p.to_string_lossy().contains("/features/"))
        && compared.iter().any(|p| p.to_string_lossy().contains("/selection/"))
        && compared.iter().any(|p| p.to_string_lossy() == "report.json");
    Ok((
        differing.is_empty() && has_all,
        format!(
            "{} files compared ({} features/selection/report), {} differ{}",
            a.len(),
            compared.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }
        ),
    ))
}
