use proptest::prelude::*;
use qfs_core::data::{make_folds, Column, Dataset, TargetKind};
use qfs_core::eval::{self, fit_predict, select_on_fold, BenchmarkConfig, Model};
use qfs_core::selection::{project, select, SelectOptions, SelectionMethod};
use qfs_core::stats::Measure;
use qfs_core::synthetic::{planted, PlantedConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_planted(seed: u64) -> Dataset {
    let cfg = PlantedConfig {
        n_records: 200,
        noise_features: 6,
        ..PlantedConfig::default()
    };
    planted(&cfg, seed).dataset
}

fn qfs_sa() -> SelectionMethod {
    SelectionMethod::Qfs {
        measure: Measure::MutualInformation,
        backend: "sa".into(),
    }
}

#[test]
fn original_bookkeeping() {
    let ds = small_planted(1);
    let cfg = BenchmarkConfig::new(vec![SelectionMethod::Original], vec![], vec![Model::knn_classifier()]);
    let r = eval::run_benchmark(&ds, &cfg).unwrap();
    assert_eq!(r.rows.len(), 5 * 2);
    assert_eq!(r.aggregates.len(), 2);
    assert!(r.aggregates.iter().all(|a| a.folds == 5 && a.k == ds.n_features()));
    let metrics: Vec<&str> = r.aggregates.iter().map(|a| a.metric.as_str()).collect();
    assert_eq!(metrics, vec!["accuracy", "f1"]);
}

#[test]
fn benchmark_is_deterministic_and_records_fold_selections() {
    let ds = small_planted(2);
    let mut cfg = BenchmarkConfig::new(
        vec![qfs_sa(), SelectionMethod::TopK { measure: Measure::ChiSquared }],
        vec![3, 5],
        vec![Model::knn_classifier(), Model::logistic_regression()],
    );
    cfg.seed = 8;
    cfg.k_folds = 4;
    let a = eval::run_benchmark(&ds, &cfg).unwrap();
    let b = eval::run_benchmark(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.selections.len(), 2 * 2 * 4);
    assert!(a.selections.iter().all(|s| s.fold.is_some() && s.selection.k == s.k));
    // per metric: 2 methods x 2 k x 2 models x 4 folds
    assert_eq!(a.rows.len(), 2 * 2 * 2 * 4 * 2);

    cfg.global_selection = true;
    let g = eval::run_benchmark(&ds, &cfg).unwrap();
    assert_eq!(g.selections.len(), 2 * 2);
    assert!(g.selections.iter().all(|s| s.fold.is_none()));
}

#[test]
fn regression_benchmark_reports_rmse() {
    let cfg = PlantedConfig {
        n_records: 150,
        noise_features: 4,
        regression: true,
        ..PlantedConfig::default()
    };
    let ds = planted(&cfg, 3).dataset;
    let methods = vec![
        SelectionMethod::Qfs {
            measure: Measure::SpearmanAbs,
            backend: "sa".into(),
        },
        SelectionMethod::Original,
    ];
    let bc = BenchmarkConfig::new(methods, vec![5], vec![Model::knn_regressor(), Model::decision_tree_regressor()]);
    let r = eval::run_benchmark(&ds, &bc).unwrap();
    assert!(r.rows.iter().all(|row| row.metric == "rmse" && row.value >= 0.0));
    let topk = BenchmarkConfig::new(
        vec![SelectionMethod::TopK { measure: Measure::AnovaF }],
        vec![2],
        vec![Model::knn_regressor()],
    );
    assert!(eval::run_benchmark(&ds, &topk).is_err());
    let wrong_model = BenchmarkConfig::new(vec![SelectionMethod::Original], vec![], vec![Model::knn_classifier()]);
    assert!(matches!(eval::run_benchmark(&ds, &wrong_model), Err(eval::EvalError::TargetMismatch { .. })));
}

/// Replace the targets of one fold's test records by a shuffled copy.
fn shuffle_test_targets(ds: &Dataset, test: &[usize], seed: u64) -> Dataset {
    let mut y = ds.target().values().to_vec();
    let mut vals: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    vals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // flip as well, so the targets change even when the shuffle keeps them
    for (&i, v) in test.iter().zip(vals) {
        y[i] = 1.0 - v;
    }
    Dataset::new(ds.features().to_vec(), Column::binary("y", y), ds.target_kind()).unwrap()
}

#[test]
fn fold_selection_ignores_test_targets() {
    let ds = small_planted(4);
    let cfg = BenchmarkConfig::new(vec![], vec![], vec![]);
    let plan = make_folds(&ds, 5, cfg.seed).unwrap();
    for method in [qfs_sa(), SelectionMethod::TopK { measure: Measure::AnovaF }] {
        for fold in 0..5 {
            let tampered = shuffle_test_targets(&ds, &plan.test_indices(fold), fold as u64);
            let a = select_on_fold(&ds, &plan, fold, &method, 4, &cfg).unwrap();
            let b = select_on_fold(&tampered, &plan, fold, &method, 4, &cfg).unwrap();
            assert_eq!(a, b, "fold {fold}");
        }
    }
}

#[test]
fn projection_round_trips() {
    let ds = small_planted(5);
    let opts = SelectOptions::default();
    let all = select(&ds, &SelectionMethod::Original, 0, 0, &opts).unwrap();
    assert_eq!(project(&ds, &all).unwrap(), ds);
    let one = select(&ds, &SelectionMethod::TopK { measure: Measure::AnovaF }, 1, 0, &opts).unwrap();
    let p = project(&ds, &one).unwrap();
    assert_eq!(p.n_features(), 1);
    assert_eq!(p.n_records(), ds.n_records());
    let again = select(&p, &SelectionMethod::Original, 0, 0, &opts).unwrap();
    assert_eq!(project(&p, &again).unwrap(), p);
}

fn grid_dataset(x: &[Vec<f64>], y: &[u8]) -> Dataset {
    let d = x[0].len();
    let features = (0..d)
        .map(|j| Column::continuous(format!("x{j}"), x.iter().map(|r| r[j]).collect()))
        .collect();
    let y = Column::binary("y", y.iter().map(|&v| f64::from(v)).collect());
    Dataset::new(features, y, TargetKind::Classification { num_classes: 2 }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Integer grids are full of exact distance ties. Power-of-two scaling
    // commutes with rounding, so the standardised coordinates and thus the
    // ties stay bit-identical.
    #[test]
    fn knn_is_invariant_to_power_of_two_rescaling(
        train in prop::collection::vec((prop::collection::vec(-20i32..20, 3), 0u8..2), 10..30),
        test in prop::collection::vec(prop::collection::vec(-20i32..20, 3), 2..8),
        exps in prop::collection::vec(-3i32..4, 3),
    ) {
        prop_assume!(train.iter().any(|t| t.1 == 0) && train.iter().any(|t| t.1 == 1));
        let to_f = |r: &Vec<i32>| r.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
        let xs: Vec<Vec<f64>> = train.iter().map(|t| to_f(&t.0)).collect();
        let ys: Vec<u8> = train.iter().map(|t| t.1).collect();
        let xt: Vec<Vec<f64>> = test.iter().map(to_f).collect();
        let scale = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| r.iter().enumerate().map(|(j, v)| v * 2f64.powi(exps[j])).collect())
                .collect()
        };
        let dummy = vec![0u8; xt.len()];
        let base = fit_predict(&Model::knn_classifier(), &grid_dataset(&xs, &ys), &grid_dataset(&xt, &dummy)).unwrap();
        let moved = fit_predict(&Model::knn_classifier(), &grid_dataset(&scale(&xs), &ys), &grid_dataset(&scale(&xt), &dummy)).unwrap();
        prop_assert_eq!(base, moved);
    }

    // Continuous draws make distance ties a measure-zero event.
    #[test]
    fn knn_is_invariant_to_affine_maps(
        train in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 3), 0u8..2), 10..30),
        test in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..8),
        scales in prop::collection::vec(0.01f64..100.0, 3),
        shifts in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        prop_assume!(train.iter().any(|t| t.1 == 0) && train.iter().any(|t| t.1 == 1));
        let xs: Vec<Vec<f64>> = train.iter().map(|t| t.0.clone()).collect();
        let ys: Vec<u8> = train.iter().map(|t| t.1).collect();
        let affine = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| r.iter().enumerate().map(|(j, v)| v * scales[j] + shifts[j]).collect())
                .collect()
        };
        let dummy = vec![0u8; test.len()];
        let base = fit_predict(&Model::knn_classifier(), &grid_dataset(&xs, &ys), &grid_dataset(&test, &dummy)).unwrap();
        let moved = fit_predict(&Model::knn_classifier(), &grid_dataset(&affine(&xs), &ys), &grid_dataset(&affine(&test), &dummy)).unwrap();
        prop_assert_eq!(base, moved);
    }

    #[test]
    fn topk_follows_column_reordering(seed in 0u64..1000, k in 1usize..6) {
        let ds = small_planted(seed);
        let n = ds.n_features();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = ds.select_features(&perm).unwrap();
        let m = SelectionMethod::TopK { measure: Measure::AnovaF };
        let opts = SelectOptions::default();
        let a = select(&ds, &m, k, 0, &opts).unwrap();
        let b = select(&shuffled, &m, k, 0, &opts).unwrap();
        let mut mapped: Vec<usize> = b.feature_indices.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(a.feature_indices, mapped);
    }
}
