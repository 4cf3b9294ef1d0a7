use std::collections::BTreeSet;

use instsel_core::env::sigmoid::SigmoidInstance;
use instsel_core::features::{
    standardize, ts_feature_vector, Channels, FeatureType, InstanceRepresentation, RepresentationSpec,
    AFFINE_INVARIANT, SPECTRAL, TS_FEATURE_NAMES,
};
use instsel_core::selector::{select_instances, SelectionConfig, SelectionMethod, SimilarityGraph, THRESHOLDS};
use instsel_core::stats::{iqm, normalize_per_instance, PolicyScoreTable, ScoreRow};
use instsel_core::{derive_rng_stream, Instance, InstanceId, InstanceSet, SetRole};
use proptest::prelude::*;

fn idx(name: &str) -> usize {
    TS_FEATURE_NAMES.iter().position(|n| *n == name).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 8..60)
}

proptest! {
    #[test]
    fn ts_features_under_affine_maps(s in series(), a in 0.1..10.0f64, b in -50.0..50.0f64) {
        let sd = {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
        };
        prop_assume!(sd > 1e-3);
        let t: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        let f = ts_feature_vector(&s).unwrap();
        let g = ts_feature_vector(&t).unwrap();
        for &i in AFFINE_INVARIANT.iter().chain(SPECTRAL.iter()) {
            prop_assert!(close(f[i], g[i], 1e-6), "{} {} vs {}", TS_FEATURE_NAMES[i], f[i], g[i]);
        }
        for name in ["mean", "median", "min", "max"] {
            let i = idx(name);
            prop_assert!(close(a * f[i] + b, g[i], 1e-9), "{name}");
        }
        for name in ["std", "iqr", "trend_slope", "mean_abs_diff", "std_diff"] {
            let i = idx(name);
            prop_assert!(close(a * f[i], g[i], 1e-9), "{name}");
        }
        prop_assert_eq!(f, ts_feature_vector(&s).unwrap());
    }

    #[test]
    fn edge_count_falls_with_threshold(rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 2..40)) {
        let ids: Vec<InstanceId> = (0..rows.len() as u32).map(InstanceId).collect();
        let counts: Vec<usize> = THRESHOLDS
            .iter()
            .map(|&t| SimilarityGraph::build(ids.clone(), &rows, t).unwrap().edge_count())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{:?}", counts);
    }

    #[test]
    fn iqm_within_sample_range(v in prop::collection::vec(-1e6..1e6f64, 1..200)) {
        let q = iqm(&v).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= q && q <= hi);
    }

    #[test]
    fn normalization_ignores_instance_affine_maps(
        scores in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..10),
        maps in prop::collection::vec((0.01..100.0f64, -100.0..100.0f64), 10),
    ) {
        let table = |mapped: bool| {
            let mut rows = Vec::new();
            for (i, per_policy) in scores.iter().enumerate() {
                for (p, v) in per_policy.iter().enumerate() {
                    let (a, b) = maps[i];
                    let value = if mapped { a * v + b } else { *v };
                    rows.push(ScoreRow {
                        policy: format!("p{p}"),
                        instance_id: InstanceId(i as u32),
                        seed: 0,
                        repetition: 0,
                        value,
                    });
                }
            }
            normalize_per_instance(&PolicyScoreTable::new(rows).unwrap())
        };
        let plain = table(false);
        let mapped = table(true);
        for (x, y) in plain.rows().iter().zip(mapped.rows()) {
            prop_assert!((x.value - y.value).abs() < 1e-9);
        }
    }

    #[test]
    fn standardized_columns_are_centered(rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 5), 2..50)) {
        let z = standardize(&rows).unwrap();
        for c in 0..5 {
            let m = z.iter().map(|r| r[c]).sum::<f64>() / z.len() as f64;
            prop_assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn selection_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 6), 3..40),
        perm_seed in any::<u64>(),
        ds in any::<bool>(),
    ) {
        let n = rows.len();
        let train = InstanceSet::new(
            SetRole::Train,
            (0..n as u32).map(|i| Instance::sigmoid(i, SigmoidInstance::new([1.0, 2.0], [1.0, 1.0]))).collect(),
        ).unwrap();
        let reps: Vec<InstanceRepresentation> = rows
            .iter()
            .enumerate()
            .map(|(i, v)| InstanceRepresentation { instance_id: InstanceId(i as u32), vector: v.clone() })
            .collect();
        let mut shuffled = reps.clone();
        let mut prng = derive_rng_stream(perm_seed, "perm");
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut prng);
        let config = SelectionConfig {
            method: if ds { SelectionMethod::DominatingSet } else { SelectionMethod::MaximalIndependentSet },
            threshold: 0.7,
            repetitions: 3,
            spec: RepresentationSpec::new(Channels::R, false, FeatureType::Ts),
        };
        let stream = derive_rng_stream(11, "select");
        let a = select_instances(&reps, &train, &config, &stream).unwrap();
        let b = select_instances(&shuffled, &train, &config, &stream).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let xs: BTreeSet<InstanceId> = x.selected.ids().collect();
            let ys: BTreeSet<InstanceId> = y.selected.ids().collect();
            prop_assert_eq!(xs, ys);
            prop_assert!(x.selected.is_subset_of(&train));
        }
    }
}
