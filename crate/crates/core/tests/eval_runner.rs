//! Rank statistics against the counting oracle and end-to-end runner
//! behavior: report shape, determinism, the shuffled-label null, and
//! fold-context error propagation.

mod common;

use rand::seq::SliceRandom;
use rand::Rng;
use skillseries::data::{synth_dataset, Dataset, Task};
use skillseries::eval::{
    make_splits, run_experiment, spearman, Correlation, EvalError, ExperimentConfig, RhoMode,
    Scheme,
};
use skillseries::features::{FeatureFamily, FeatureParams};
use skillseries::pipeline::PipelineHyper;

#[test]
fn spearman_matches_counting_oracle_on_random_pairs() {
    let mut rng = common::rng(501);
    for case in 0..200 {
        let n = rng.gen_range(4..=25);
        // quantized draws produce plenty of ties
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| {
                if case % 2 == 0 {
                    rng.gen_range(0..8) as f64
                } else {
                    a[i] + rng.gen_range(-1..=1) as f64
                }
            })
            .collect();
        let got = spearman(&a, &b).unwrap();
        match (got, common::spearman_bruteforce(&a, &b)) {
            (Correlation::Defined { rho, .. }, Some(expected)) => {
                assert_eq!(rho, expected, "case {case}: a={a:?} b={b:?}");
            }
            (Correlation::Degenerate, None) => {}
            (got, expected) => panic!("case {case}: {got:?} vs oracle {expected:?}"),
        }
    }
}

#[test]
fn perfect_predictions_give_rho_one_and_full_accuracy() {
    // ties included: identical vectors still rank identically
    let truth = [6.0, 6.0, 12.0, 18.0, 18.0, 24.0, 30.0, 30.0];
    match spearman(&truth, &truth).unwrap() {
        Correlation::Defined { rho, p } => {
            assert_eq!(rho, 1.0);
            assert_eq!(p, 0.0);
        }
        Correlation::Degenerate => panic!("unexpected degenerate"),
    }
    let labels = ["a", "b", "b", "c"];
    let correct = labels.iter().zip(labels.iter()).filter(|(x, y)| x == y).count();
    assert_eq!(100.0 * correct as f64 / labels.len() as f64, 100.0);
}

fn small_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.tasks = vec![Task::Suturing];
    config.schemes = vec![Scheme::Loso, Scheme::Louo];
    config.families = vec![FeatureFamily::Dct, FeatureFamily::ApEn];
    config.combos = vec![vec![FeatureFamily::Dct, FeatureFamily::ApEn]];
    config.feature_params = FeatureParams {
        q_dct: 8,
        q_dft: 8,
        ..FeatureParams::default()
    };
    config.class_k.insert(FeatureFamily::Dct, 4);
    config.class_k.insert(FeatureFamily::ApEn, 4);
    let hyper = PipelineHyper {
        k_pca: 4,
        c: 1.0,
        epsilon: 0.1,
    };
    config.pred_hyper.insert(FeatureFamily::Dct, hyper);
    config.pred_hyper.insert(FeatureFamily::ApEn, hyper);
    config.repeats = 3;
    config.seed = 11;
    config
}

#[test]
fn runner_produces_well_formed_deterministic_report() {
    let ds = synth_dataset(4, 3, Task::Suturing, 2, 260, 77).unwrap();
    let config = small_config();
    let report = run_experiment(&ds, &config).unwrap();
    let again = run_experiment(&ds, &config).unwrap();
    assert_eq!(report.to_json(), again.to_json());

    for by_scheme in report.prediction.values() {
        for by_fs in by_scheme.values() {
            assert_eq!(by_fs.len(), 3, "two singles plus one combo");
            for cell in by_fs.values() {
                assert_eq!(cell.criteria.len(), 7);
                for corr in cell.criteria.values() {
                    if let Some(rho) = corr.rho {
                        assert!((-1.0..=1.0).contains(&rho));
                    }
                    if let Some(p) = corr.p {
                        assert!((0.0..=1.0).contains(&p));
                    }
                }
            }
        }
    }
    for by_scheme in report.classification.values() {
        for by_family in by_scheme.values() {
            for cell in by_family.values() {
                assert!((0.0..=100.0).contains(&cell.accuracy));
                assert!(cell.n > 0);
            }
        }
    }
    // heatmaps carry one row per fused family, scaled into [0, 1]
    let heatmaps = report.heatmap_csvs();
    assert_eq!(heatmaps.len(), 2, "one combo per scheme");
    for (_, csv) in &heatmaps {
        assert!(csv.starts_with("family,RT,TM,FO,OP,QP,SH,GRS"));
        assert_eq!(csv.lines().count(), 3);
    }
    assert!(!report.prediction_table().is_empty());
    assert!(!report.classification_table().is_empty());
    assert!(!report.averaged_table().is_empty());
}

#[test]
fn runner_separates_skill_levels_on_easy_data() {
    let ds = synth_dataset(6, 3, Task::Suturing, 3, 300, 5).unwrap();
    let mut config = small_config();
    config.schemes = vec![Scheme::Loso];
    config.repeats = 5;
    let report = run_experiment(&ds, &config).unwrap();
    let cell = &report.prediction["Suturing"]["LOSO"]["DCT"];
    let grs = cell.criteria["GRS"].rho.expect("defined rho");
    assert!(grs > 0.7, "easy synthetic data should separate, got {grs}");
    let acc = report.classification["Suturing"]["LOSO"]["DCT"].accuracy;
    assert!(acc > 60.0, "accuracy {acc}");
}

/// Shuffles trial labels with a seeded RNG, keeping each label struct
/// intact so GRS stays the sum of its OSATS row.
fn shuffle_labels(ds: &Dataset, seed: u64) -> Dataset {
    let mut rng = common::rng(seed);
    let mut labels: Vec<_> = ds.trials().iter().map(|t| t.labels).collect();
    labels.shuffle(&mut rng);
    let trials = ds
        .trials()
        .iter()
        .zip(labels)
        .map(|(t, labels)| {
            let mut t = t.clone();
            t.labels = labels;
            t
        })
        .collect();
    Dataset::new(trials, ds.task_filter).unwrap()
}

#[test]
fn shuffled_labels_give_near_zero_mean_rho() {
    // pools must be reasonably sized: tiny cross-validation pools carry
    // a real negative bias under the null
    let base = synth_dataset(8, 5, Task::Suturing, 2, 260, 99).unwrap();
    let mut config = small_config();
    config.schemes = vec![Scheme::Loso];
    config.families = vec![FeatureFamily::Dct];
    config.combos = vec![];
    config.repeats = 4;
    let mut rhos = Vec::new();
    for seed in 0..20 {
        let ds = shuffle_labels(&base, 3000 + seed);
        config.seed = seed;
        let report = run_experiment(&ds, &config).unwrap();
        if let Some(rho) = report.prediction["Suturing"]["LOSO"]["DCT"].criteria["GRS"].rho {
            rhos.push(rho);
        }
    }
    assert!(rhos.len() >= 15, "too many degenerate pools: {}", rhos.len());
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    assert!(mean.abs() < 0.15, "null mean rho {mean}");
}

#[test]
fn fold_mean_mode_reports_fold_averages() {
    let ds = synth_dataset(4, 3, Task::Suturing, 2, 260, 42).unwrap();
    let mut config = small_config();
    config.schemes = vec![Scheme::Louo];
    config.rho_mode = RhoMode::FoldMean;
    let report = run_experiment(&ds, &config).unwrap();
    let cell = &report.prediction["Suturing"]["LOUO"]["DCT"].criteria["GRS"];
    // p-values are undefined in fold-mean mode
    assert!(cell.p.is_none());
    // a LOUO fold tests one surgeon's 3 trials; degenerate folds (the
    // surgeon's GRS values all tie) are excluded and counted
    assert!(cell.degenerate <= 4);
    assert_eq!(cell.n, 12);
}

#[test]
fn permutation_p_mode_runs() {
    let ds = synth_dataset(4, 3, Task::Suturing, 2, 260, 7).unwrap();
    let mut config = small_config();
    config.schemes = vec![Scheme::Loso];
    config.permutation_p_draws = Some(99);
    let report = run_experiment(&ds, &config).unwrap();
    let cell = &report.prediction["Suturing"]["LOSO"]["DCT"].criteria["GRS"];
    if let Some(p) = cell.p {
        assert!(p >= 1.0 / 100.0, "add-one smoothing floors the p-value");
    }
}

#[test]
fn louo_on_single_surgeon_errors() {
    let ds = synth_dataset(1, 4, Task::Suturing, 2, 260, 3).unwrap();
    assert!(matches!(
        make_splits(&ds, Scheme::Louo, 1, 0),
        Err(EvalError::InsufficientTrials(_))
    ));
}

#[test]
fn runner_wraps_errors_with_fold_context() {
    // ApEn classification with a series too short for the default radii
    // cannot happen, but a PCA fit on one training row can: 2 surgeons
    // with 1 trial each under LOUO leaves 1-row training folds
    let ds = synth_dataset(2, 1, Task::Suturing, 2, 260, 3).unwrap();
    let mut config = small_config();
    config.schemes = vec![Scheme::Louo];
    config.families = vec![FeatureFamily::Dct];
    config.combos = vec![];
    match run_experiment(&ds, &config) {
        Err(EvalError::FoldContext { fold, .. }) => assert_eq!(fold, 0),
        other => panic!("expected fold context error, got {other:?}"),
    }
}
