//! Per-instance meta-features built from evaluation trajectories.

mod catalog;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use catalog::{ts_feature_vector, AFFINE_INVARIANT, SPECTRAL, TS_FEATURE_COUNT, TS_FEATURE_NAMES};

use crate::error::{Error, Result};
use crate::types::{Benchmark, EpisodeTrajectory, Instance, InstanceId, InstanceKind};

/// Which trajectory channels feed the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channels {
    /// Actions only.
    A,
    /// Rewards only.
    R,
    /// Actions followed by rewards.
    RA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureType {
    /// Flattened per-step values; fixed-length episodes only.
    Raw,
    /// Time-series catalog per channel.
    Ts,
}

/// Feature source (`A`, `R`, `RA`, optionally `+I` for instance features)
/// and feature type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepresentationSpec {
    pub channels: Channels,
    pub instance_features: bool,
    pub feature_type: FeatureType,
}

impl RepresentationSpec {
    pub fn new(channels: Channels, instance_features: bool, feature_type: FeatureType) -> Self {
        RepresentationSpec { channels, instance_features, feature_type }
    }

    /// Source label such as `RA+I`.
    pub fn source_label(&self) -> String {
        let base = match self.channels {
            Channels::A => "A",
            Channels::R => "R",
            Channels::RA => "RA",
        };
        if self.instance_features {
            format!("{base}+I")
        } else {
            base.to_string()
        }
    }

    pub fn parse_source(source: &str) -> Result<(Channels, bool)> {
        let (base, inst) = match source.strip_suffix("+I") {
            Some(b) => (b, true),
            None => (source, false),
        };
        let channels = match base {
            "A" => Channels::A,
            "R" => Channels::R,
            "RA" | "AR" => Channels::RA,
            _ => return Err(Error::arg(format!("unknown feature source {source:?}"))),
        };
        Ok((channels, inst))
    }

    fn uses_actions(&self) -> bool {
        matches!(self.channels, Channels::A | Channels::RA)
    }

    fn uses_rewards(&self) -> bool {
        matches!(self.channels, Channels::R | Channels::RA)
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureType::Raw => "raw",
            FeatureType::Ts => "ts",
        })
    }
}

impl FromStr for FeatureType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureType::Raw),
            "ts" | "catch22" => Ok(FeatureType::Ts),
            _ => Err(Error::arg(format!("unknown feature type {s:?}"))),
        }
    }
}

impl fmt::Display for RepresentationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.feature_type, self.source_label())
    }
}

/// Parses `"<type>-<source>"`, e.g. `ts-RA+I`.
impl FromStr for RepresentationSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (ty, source) =
            s.split_once('-').ok_or_else(|| Error::arg(format!("representation {s:?} is not <type>-<source>")))?;
        let (channels, instance_features) = Self::parse_source(source)?;
        Ok(RepresentationSpec { channels, instance_features, feature_type: ty.parse()? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRepresentation {
    pub instance_id: InstanceId,
    pub vector: Vec<f64>,
}

/// Raw representation of one fixed-length episode: actions flattened
/// step-major, then rewards.
pub fn raw_representation(traj: &EpisodeTrajectory, channels: Channels) -> Vec<f64> {
    let mut v = Vec::new();
    if matches!(channels, Channels::A | Channels::RA) {
        v.extend(traj.actions.iter().flatten().copied());
    }
    if matches!(channels, Channels::R | Channels::RA) {
        v.extend_from_slice(&traj.rewards);
    }
    v
}

/// Static description of an instance.
pub fn instance_features(instance: &Instance) -> Vec<f64> {
    match &instance.kind {
        InstanceKind::Sigmoid(p) => vec![p.shifts[0], p.slopes[0], p.shifts[1], p.slopes[1]],
        InstanceKind::Cmaes(p) => {
            let mut v = vec![0.0; 10];
            v[(p.function_id - 1) as usize] = 1.0;
            v.push(p.bbob_instance_id as f64);
            v
        }
    }
}

fn instance_feature_names(benchmark: Benchmark) -> Vec<String> {
    match benchmark {
        Benchmark::Sigmoid => {
            ["I_shift_0", "I_slope_0", "I_shift_1", "I_slope_1"].iter().map(|s| s.to_string()).collect()
        }
        Benchmark::Cmaes => {
            (1..=10).map(|f| format!("I_fid_{f}")).chain(core::iter::once("I_bbob_instance".to_string())).collect()
        }
    }
}

/// Column names of a representation, in vector order.
pub fn feature_names(benchmark: Benchmark, spec: &RepresentationSpec) -> Result<Vec<String>> {
    let dims = benchmark.action_dim();
    let mut names = Vec::new();
    match spec.feature_type {
        FeatureType::Raw => {
            let horizon = benchmark.fixed_horizon().ok_or_else(|| {
                Error::arg(format!("{benchmark} episodes vary in length; raw features are unavailable"))
            })?;
            if spec.uses_actions() {
                for t in 0..horizon {
                    for d in 0..dims {
                        names.push(format!("A{d}_t{t}"));
                    }
                }
            }
            if spec.uses_rewards() {
                names.extend((0..horizon).map(|t| format!("R_t{t}")));
            }
        }
        FeatureType::Ts => {
            let mut channels: Vec<String> = Vec::new();
            if spec.uses_actions() {
                channels.extend((0..dims).map(|d| format!("A{d}")));
            }
            if spec.uses_rewards() {
                channels.push("R".to_string());
            }
            for c in channels {
                names.extend(TS_FEATURE_NAMES.iter().map(|f| format!("{c}_{f}")));
            }
        }
    }
    if spec.instance_features {
        names.extend(instance_feature_names(benchmark));
    }
    Ok(names)
}

pub fn representation_dim(benchmark: Benchmark, spec: &RepresentationSpec) -> Result<usize> {
    Ok(feature_names(benchmark, spec)?.len())
}

fn episode_vector(traj: &EpisodeTrajectory, spec: &RepresentationSpec, benchmark: Benchmark) -> Result<Vec<f64>> {
    let dims = benchmark.action_dim();
    let representation_err = |reason: String| Error::Representation { instance: traj.instance_id, reason };
    if traj.actions.iter().any(|a| a.len() != dims) {
        return Err(representation_err(format!(
            "episode {} has actions of the wrong dimension (expected {dims})",
            traj.episode
        )));
    }
    match spec.feature_type {
        FeatureType::Raw => {
            let Some(horizon) = benchmark.fixed_horizon() else {
                return Err(representation_err("variable-length episodes need time-series features".into()));
            };
            if traj.len() != horizon {
                return Err(representation_err(format!(
                    "episode {} has length {}, raw features need exactly {horizon}",
                    traj.episode,
                    traj.len()
                )));
            }
            Ok(raw_representation(traj, spec.channels))
        }
        FeatureType::Ts => {
            let mut v = Vec::new();
            if spec.uses_actions() {
                for d in 0..dims {
                    v.extend(ts_feature_vector(&traj.action_channel(d))?);
                }
            }
            if spec.uses_rewards() {
                v.extend(ts_feature_vector(&traj.rewards)?);
            }
            Ok(v)
        }
    }
}

/// Element-wise mean of the per-episode vectors, with instance features
/// appended when the spec asks for them.
pub fn build_instance_representation(
    trajectories: &[EpisodeTrajectory],
    spec: &RepresentationSpec,
    instance: &Instance,
) -> Result<InstanceRepresentation> {
    if trajectories.is_empty() {
        return Err(Error::Representation { instance: instance.id, reason: "no trajectories".into() });
    }
    if let Some(t) = trajectories.iter().find(|t| t.instance_id != instance.id) {
        return Err(Error::Representation {
            instance: instance.id,
            reason: format!("received a trajectory of instance {}", t.instance_id),
        });
    }
    let benchmark = instance.benchmark();
    let mut sum: Option<Vec<f64>> = None;
    for traj in trajectories {
        let v = episode_vector(traj, spec, benchmark)?;
        match &mut sum {
            None => sum = Some(v),
            Some(s) if s.len() == v.len() => s.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
            Some(_) => {
                return Err(Error::Representation {
                    instance: instance.id,
                    reason: "episodes yield vectors of different dimension".into(),
                })
            }
        }
    }
    let count = trajectories.len() as f64;
    let mut vector: Vec<f64> = sum.unwrap().into_iter().map(|s| s / count).collect();
    if spec.instance_features {
        vector.extend(instance_features(instance));
    }
    if let Some(pos) = vector.iter().position(|v| !v.is_finite()) {
        return Err(Error::Representation { instance: instance.id, reason: format!("feature {pos} is not finite") });
    }
    Ok(InstanceRepresentation { instance_id: instance.id, vector })
}

/// Per-column z-scores with population standard deviation; constant columns
/// become zeros.
pub fn standardize(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(Error::arg("standardization needs at least two rows"));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::arg("rows have different lengths"));
    }
    let n = rows.len() as f64;
    let mut out = vec![vec![0.0; d]; rows.len()];
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        let sd = libm::sqrt(var);
        if sd <= 1e-12 * f64::max(1.0, libm::fabs(mean)) {
            continue;
        }
        for (o, r) in out.iter_mut().zip(rows) {
            o[j] = (r[j] - mean) / sd;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::cmaes::CmaesInstance;
    use crate::env::sigmoid::SigmoidInstance;

    fn sigmoid_instance() -> Instance {
        Instance::sigmoid(7, SigmoidInstance::new([2.0, 8.0], [1.0, -3.0]))
    }

    fn sigmoid_traj(episode: u32, reward: f64) -> EpisodeTrajectory {
        let actions = (0..10).map(|t| vec![(t % 5) as f64, (t % 10) as f64]).collect();
        EpisodeTrajectory::new(InstanceId(7), episode, actions, vec![reward; 10]).unwrap()
    }

    fn spec(s: &str) -> RepresentationSpec {
        s.parse().unwrap()
    }

    #[test]
    fn raw_layout() {
        let t = sigmoid_traj(0, 0.25);
        assert_eq!(raw_representation(&t, Channels::A).len(), 20);
        assert_eq!(raw_representation(&t, Channels::R).len(), 10);
        let ra = raw_representation(&t, Channels::RA);
        assert_eq!(ra.len(), 30);
        assert_eq!(&ra[20..], &[0.25; 10]);
        assert_eq!(&ra[..4], &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn raw_rejects_variable_length() {
        let inst = Instance::cmaes(3, CmaesInstance { function_id: 1, bbob_instance_id: 1, dimension: 10 });
        let t = EpisodeTrajectory::new(InstanceId(3), 0, vec![vec![0.5]; 4], vec![-1.0; 4]).unwrap();
        let err = build_instance_representation(core::slice::from_ref(&t), &spec("raw-A"), &inst).unwrap_err();
        assert!(matches!(err, Error::Representation { instance: InstanceId(3), .. }));
        assert_eq!(build_instance_representation(&[t], &spec("ts-RA"), &inst).unwrap().vector.len(), 48);
    }

    #[test]
    fn instance_feature_layouts() {
        assert_eq!(instance_features(&sigmoid_instance()), vec![2.0, 1.0, 8.0, -3.0]);
        let c = Instance::cmaes(0, CmaesInstance { function_id: 3, bbob_instance_id: 2, dimension: 10 });
        let v = instance_features(&c);
        assert_eq!(v.len(), 11);
        assert_eq!(v[2], 1.0);
        assert_eq!(v.iter().take(10).sum::<f64>(), 1.0);
        assert_eq!(v[10], 2.0);
        let other = Instance::sigmoid(8, SigmoidInstance::new([2.0, 8.5], [1.0, -3.0]));
        assert_ne!(instance_features(&sigmoid_instance()), instance_features(&other));
    }

    #[test]
    fn dimensions_per_spec() {
        let cases = [
            (Benchmark::Sigmoid, "ts-A", 48),
            (Benchmark::Sigmoid, "ts-R", 24),
            (Benchmark::Sigmoid, "ts-RA", 72),
            (Benchmark::Sigmoid, "ts-RA+I", 76),
            (Benchmark::Sigmoid, "raw-RA+I", 34),
            (Benchmark::Cmaes, "ts-A", 24),
            (Benchmark::Cmaes, "ts-R", 24),
            (Benchmark::Cmaes, "ts-RA", 48),
            (Benchmark::Cmaes, "ts-RA+I", 59),
        ];
        for (b, s, d) in cases {
            assert_eq!(representation_dim(b, &spec(s)).unwrap(), d, "{b} {s}");
        }
        assert!(representation_dim(Benchmark::Cmaes, &spec("raw-A")).is_err());
        let v = build_instance_representation(&[sigmoid_traj(0, 0.3)], &spec("ts-RA+I"), &sigmoid_instance()).unwrap();
        assert_eq!(v.vector.len(), 76);
    }

    #[test]
    fn identical_episodes_average_to_one() {
        let one = build_instance_representation(&[sigmoid_traj(0, 0.4)], &spec("ts-RA"), &sigmoid_instance()).unwrap();
        let many: Vec<_> = (0..10).map(|e| sigmoid_traj(e, 0.4)).collect();
        let avg = build_instance_representation(&many, &spec("ts-RA"), &sigmoid_instance()).unwrap();
        for (a, b) in one.vector.iter().zip(&avg.vector) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn zero_rewards_give_zero_series_features() {
        let many: Vec<_> = (0..10).map(|e| sigmoid_traj(e, 0.0)).collect();
        let r = build_instance_representation(&many, &spec("ts-R"), &sigmoid_instance()).unwrap();
        assert_eq!(r.vector, ts_feature_vector(&[0.0; 10]).unwrap().to_vec());
    }

    #[test]
    fn inconsistent_episodes_rejected() {
        let bad = EpisodeTrajectory::new(InstanceId(7), 1, vec![vec![1.0]; 10], vec![0.0; 10]).unwrap();
        let err = build_instance_representation(&[sigmoid_traj(0, 0.1), bad], &spec("ts-A"), &sigmoid_instance());
        assert!(matches!(err, Err(Error::Representation { .. })));
        assert!(build_instance_representation(&[], &spec("ts-A"), &sigmoid_instance()).is_err());
    }

    #[test]
    fn spec_round_trip() {
        for s in ["ts-A", "ts-R+I", "raw-RA", "raw-RA+I"] {
            assert_eq!(spec(s).to_string(), s);
        }
        assert!("ts-X".parse::<RepresentationSpec>().is_err());
        assert!("tsR".parse::<RepresentationSpec>().is_err());
    }

    #[test]
    fn standardize_columns() {
        let rows = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let z = standardize(&rows).unwrap();
        let expected = 1.224_744_871_391_589;
        assert!((z[0][0] + expected).abs() < 1e-12);
        assert_eq!(z[1][0], 0.0);
        assert!((z[2][0] - expected).abs() < 1e-12);
        assert!(z.iter().all(|r| r[1] == 0.0));
        assert!(standardize(&rows[..1]).is_err());
    }
}
