//! The experiment runner: featurizes trials, walks the fold plan fitting
//! PCA/KNN/SVR/fusion on training rows only, pools test predictions, and
//! emits the report tables and heatmaps.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{make_splits, spearman, spearman_permutation_p, Correlation, EvalError, Fold, Scheme};
use crate::data::{Dataset, ScoreTarget, SkillLevel, Task};
use crate::features::{featurize, FeatureFamily, FeatureParams};
use crate::fusion::{
    build_fusion_training_matrix, fit_fusion, fused_predict, scale_weights_per_criterion,
    FusionTrainingInputs,
};
use crate::models::{knn_classify, KnnModel};
use crate::pipeline::{FamilyParams, PipelineHyper, TrainedPipeline};
use crate::reduce::pca_fit;

/// How pooled test predictions are turned into one rho per criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhoMode {
    /// One Spearman over all test predictions pooled across folds.
    Pooled,
    /// Per-fold Spearman, averaged over folds with defined rho.
    FoldMean,
}

impl RhoMode {
    pub fn parse(s: &str) -> Result<RhoMode, EvalError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pooled" => Ok(RhoMode::Pooled),
            "fold-mean" | "foldmean" | "fold_mean" => Ok(RhoMode::FoldMean),
            other => Err(EvalError::BadInput(format!("unknown rho mode `{other}`"))),
        }
    }
}

impl fmt::Display for RhoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoMode::Pooled => "pooled",
            RhoMode::FoldMean => "fold-mean",
        })
    }
}

/// Everything the runner needs for one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub schemes: Vec<Scheme>,
    /// Families evaluated individually (classification + prediction).
    pub families: Vec<FeatureFamily>,
    /// Family sets fused for score prediction.
    pub combos: Vec<Vec<FeatureFamily>>,
    pub feature_params: FeatureParams,
    /// PCA components for classification, per family.
    pub class_k: BTreeMap<FeatureFamily, usize>,
    /// PCA components and SVR hyperparameters for prediction, per family.
    pub pred_hyper: BTreeMap<FeatureFamily, PipelineHyper>,
    pub repeats: usize,
    pub seed: u64,
    pub rho_mode: RhoMode,
    /// When set, pooled p-values come from this many label permutations
    /// instead of the t-approximation.
    pub permutation_p_draws: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut class_k = BTreeMap::new();
        class_k.insert(FeatureFamily::Smt, 50);
        class_k.insert(FeatureFamily::Dct, 150);
        class_k.insert(FeatureFamily::Dft, 150);
        class_k.insert(FeatureFamily::ApEn, 40);
        let mut pred_hyper = BTreeMap::new();
        let hyper = |k_pca: usize, c: f64| PipelineHyper {
            k_pca,
            c,
            epsilon: 0.1,
        };
        pred_hyper.insert(FeatureFamily::Smt, hyper(10, 1e2));
        pred_hyper.insert(FeatureFamily::Dct, hyper(1000, 1e-6));
        pred_hyper.insert(FeatureFamily::Dft, hyper(250, 1e-6));
        pred_hyper.insert(FeatureFamily::ApEn, hyper(40, 1e4));
        use FeatureFamily::*;
        ExperimentConfig {
            tasks: Task::ALL.to_vec(),
            schemes: vec![Scheme::Loso, Scheme::Louo],
            families: FeatureFamily::ALL.to_vec(),
            combos: vec![
                vec![Smt, Dct],
                vec![Smt, Dft],
                vec![Smt, ApEn],
                vec![Smt, Dct, Dft],
                vec![Dct, Dft],
                vec![Dct, Dft, ApEn],
                vec![Smt, Dct, Dft, ApEn],
            ],
            feature_params: FeatureParams::default(),
            class_k,
            pred_hyper,
            repeats: 20,
            seed: 7,
            rho_mode: RhoMode::Pooled,
            permutation_p_draws: None,
        }
    }
}

/// Joined family tags, e.g. `DCT+DFT+ApEn`.
pub fn combo_key(families: &[FeatureFamily]) -> String {
    families
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrCell {
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    /// Folds (fold-mean mode) or pools (pooled mode) with undefined rho.
    pub degenerate: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionCell {
    /// Keyed by criterion display name (RT..SH plus GRS).
    pub criteria: BTreeMap<String, CorrCell>,
    /// Mean rho over the six OSATS criteria with defined rho.
    pub osats_mean_rho: Option<f64>,
    /// True when every OSATS criterion is defined with p < 0.05.
    pub osats_all_significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationCell {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionHeatmap {
    pub families: Vec<String>,
    pub criteria: Vec<String>,
    /// Fold-averaged raw weights, rows = families.
    pub mean_weights: Vec<Vec<f64>>,
    /// Min-max scaled to [0, 1] per criterion column.
    pub scaled: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub repeats: usize,
    pub rho_mode: RhoMode,
    pub permutation_p_draws: Option<usize>,
    pub params_hash: BTreeMap<String, u64>,
    pub featureset_order: Vec<String>,
    pub notes: Vec<String>,
}

/// All results of one `run_experiment` call. Maps are keyed
/// task -> scheme -> featureset (or family).
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub classification: BTreeMap<String, BTreeMap<String, BTreeMap<String, ClassificationCell>>>,
    pub prediction: BTreeMap<String, BTreeMap<String, BTreeMap<String, PredictionCell>>>,
    pub fusion_weights: BTreeMap<String, BTreeMap<String, BTreeMap<String, FusionHeatmap>>>,
}

/// Per-fold raw outputs, merged after the parallel fold loop.
struct FoldOutput {
    class_pairs: BTreeMap<FeatureFamily, Vec<(SkillLevel, SkillLevel)>>,
    /// featureset key -> [criterion][test index] (prediction, truth)
    pred_pairs: BTreeMap<String, Vec<Vec<(f64, f64)>>>,
    /// combo key -> [criterion] -> weights over the combo's families
    weights: BTreeMap<String, Vec<Vec<f64>>>,
    notes: BTreeSet<String>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    DMatrix::from_row_slice(n, p, &flat)
}

/// Gathers rows by index, asserting the indices stay inside the allowed
/// (training) set — the runner's no-leakage instrumentation hook.
fn gather_rows(rows: &[Vec<f64>], idx: &[usize], allowed: &HashSet<usize>) -> Vec<Vec<f64>> {
    debug_assert!(idx.iter().all(|i| allowed.contains(i)));
    idx.iter().map(|i| rows[*i].clone()).collect()
}

fn validate_config(config: &ExperimentConfig) -> Result<(), EvalError> {
    if config.tasks.is_empty() || config.schemes.is_empty() {
        return Err(EvalError::BadInput("no tasks or schemes configured".into()));
    }
    if config.families.is_empty() && config.combos.is_empty() {
        return Err(EvalError::BadInput("no families or combos configured".into()));
    }
    for combo in &config.combos {
        if combo.is_empty() {
            return Err(EvalError::BadInput("empty fusion combo".into()));
        }
    }
    for family in needed_families(config) {
        if !config.pred_hyper.contains_key(&family) {
            return Err(EvalError::BadInput(format!(
                "missing prediction hyperparameters for {family}"
            )));
        }
    }
    for family in &config.families {
        if !config.class_k.contains_key(family) {
            return Err(EvalError::BadInput(format!(
                "missing classification PCA size for {family}"
            )));
        }
    }
    Ok(())
}

fn needed_families(config: &ExperimentConfig) -> Vec<FeatureFamily> {
    let mut set: BTreeSet<FeatureFamily> = config.families.iter().cloned().collect();
    for combo in &config.combos {
        set.extend(combo.iter().cloned());
    }
    set.into_iter().collect()
}

/// Runs the configured experiment: per task and scheme, fits on training
/// folds only, pools test predictions, and fills the report.
pub fn run_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    validate_config(config)?;
    let needed = needed_families(config);

    let mut featureset_order: Vec<String> =
        config.families.iter().map(|f| f.to_string()).collect();
    featureset_order.extend(config.combos.iter().map(|c| combo_key(c)));

    let mut params_hash = BTreeMap::new();
    for family in &needed {
        params_hash.insert(
            family.to_string(),
            config.feature_params.family_hash(*family),
        );
    }

    let mut report = ExperimentReport {
        meta: ReportMeta {
            seed: config.seed,
            repeats: config.repeats,
            rho_mode: config.rho_mode,
            permutation_p_draws: config.permutation_p_draws,
            params_hash,
            featureset_order,
            notes: Vec::new(),
        },
        classification: BTreeMap::new(),
        prediction: BTreeMap::new(),
        fusion_weights: BTreeMap::new(),
    };
    let mut notes: BTreeSet<String> = BTreeSet::new();

    for &task in &config.tasks {
        let ds = match dataset.task_filter {
            Some(t) if t == task => dataset.clone(),
            _ => dataset.filter_task(task),
        };
        if ds.is_empty() {
            return Err(EvalError::InsufficientTrials(format!(
                "no trials for task {task}"
            )));
        }

        // Featurize once per task; folds reuse the rows.
        let mut rows_by_family: BTreeMap<FeatureFamily, Vec<Vec<f64>>> = BTreeMap::new();
        for &family in &needed {
            let rows: Result<Vec<Vec<f64>>, EvalError> = ds
                .trials()
                .par_iter()
                .map(|t| {
                    featurize(t, family, &config.feature_params)
                        .map(|fv| fv.values)
                        .map_err(EvalError::from)
                })
                .collect();
            rows_by_family.insert(family, rows?);
        }

        for &scheme in &config.schemes {
            let plan = make_splits(&ds, scheme, config.repeats, config.seed)?;
            let outputs: Result<Vec<FoldOutput>, EvalError> = plan
                .folds
                .par_iter()
                .enumerate()
                .map(|(fi, fold)| {
                    run_fold(&ds, &rows_by_family, fold, config, &needed)
                        .map_err(|e| e.in_fold(fi))
                })
                .collect();
            let outputs = outputs?;
            aggregate(
                &mut report,
                &mut notes,
                task,
                scheme,
                config,
                &outputs,
            )?;
        }

        // soft sanity note: LOUO is the harder scheme, so its pooled GRS
        // rho rarely beats LOSO by much; logged, never asserted
        if config.schemes.contains(&Scheme::Loso) && config.schemes.contains(&Scheme::Louo) {
            let task_key = task.to_string();
            if let Some(by_scheme) = report.prediction.get(&task_key) {
                for fs in &report.meta.featureset_order {
                    let rho = |scheme: &str| -> Option<f64> {
                        by_scheme
                            .get(scheme)?
                            .get(fs)?
                            .criteria
                            .get("GRS")?
                            .rho
                    };
                    if let (Some(loso), Some(louo)) = (rho("LOSO"), rho("LOUO")) {
                        if louo > loso + 0.1 {
                            notes.insert(format!(
                                "{task_key}/{fs}: LOUO GRS rho {louo:.2} exceeds LOSO {loso:.2} + 0.1"
                            ));
                        }
                    }
                }
            }
        }
    }

    report.meta.notes = notes.into_iter().collect();
    Ok(report)
}

fn run_fold(
    ds: &Dataset,
    rows_by_family: &BTreeMap<FeatureFamily, Vec<Vec<f64>>>,
    fold: &Fold,
    config: &ExperimentConfig,
    needed: &[FeatureFamily],
) -> Result<FoldOutput, EvalError> {
    let train = &fold.train;
    let test = &fold.test;
    let train_set: HashSet<usize> = train.iter().cloned().collect();
    let labels = |i: usize| &ds.trials()[i].labels;

    let mut out = FoldOutput {
        class_pairs: BTreeMap::new(),
        pred_pairs: BTreeMap::new(),
        weights: BTreeMap::new(),
        notes: BTreeSet::new(),
    };

    // Per-family pipelines on the full training fold; their test
    // predictions serve both the single-family rows and the fused rows.
    let mut family_preds: BTreeMap<FeatureFamily, Vec<Vec<f64>>> = BTreeMap::new();
    for &family in needed {
        let rows = &rows_by_family[&family];
        let train_rows = gather_rows(rows, train, &train_set);

        if config.families.contains(&family) {
            let k = config.class_k[&family];
            let pca = pca_fit(&matrix_from_rows(&train_rows), k)?;
            if let Some(from) = pca.clamped_from() {
                out.notes.insert(format!(
                    "{family} classification: PCA k clamped from {from} to {}",
                    pca.k()
                ));
            }
            let mut train_z = DMatrix::<f64>::zeros(train.len(), pca.k());
            for (r, row) in train_rows.iter().enumerate() {
                let z = pca.transform(&DVector::from_column_slice(row))?;
                train_z.row_mut(r).copy_from(&z.transpose());
            }
            let knn = KnnModel::new(
                train_z,
                train.iter().map(|i| labels(*i).self_proclaimed).collect(),
            )?;
            let mut pairs = Vec::with_capacity(test.len());
            for &i in test {
                let z = pca.transform(&DVector::from_column_slice(&rows[i]))?;
                pairs.push((knn_classify(&knn, &z)?, labels(i).self_proclaimed));
            }
            out.class_pairs.insert(family, pairs);
        }

        let hyper = config.pred_hyper[&family];
        let fam_params = FamilyParams::from_feature_params(family, &config.feature_params);
        let mut per_criterion = Vec::with_capacity(ScoreTarget::ALL.len());
        for target in ScoreTarget::ALL {
            let train_scores: Vec<f64> = train.iter().map(|i| labels(*i).score(target)).collect();
            let pipeline =
                TrainedPipeline::fit(&train_rows, &train_scores, target, fam_params.clone(), hyper)?;
            if let Some(from) = pipeline.pca.clamped_from() {
                out.notes.insert(format!(
                    "{family} prediction: PCA k clamped from {from} to {}",
                    pipeline.pca.k()
                ));
            }
            let preds: Result<Vec<f64>, EvalError> = test
                .iter()
                .map(|i| pipeline.predict_features(&rows[*i]).map_err(EvalError::from))
                .collect();
            per_criterion.push(preds?);
        }
        family_preds.insert(family, per_criterion);
    }

    for &family in &config.families {
        let per_criterion: Vec<Vec<(f64, f64)>> = ScoreTarget::ALL
            .iter()
            .enumerate()
            .map(|(ci, target)| {
                family_preds[&family][ci]
                    .iter()
                    .zip(test)
                    .map(|(p, i)| (*p, labels(*i).score(*target)))
                    .collect()
            })
            .collect();
        out.pred_pairs.insert(family.to_string(), per_criterion);
    }

    if !config.combos.is_empty() {
        run_fold_fusion(ds, rows_by_family, fold, config, needed, &family_preds, &mut out)?;
    }
    Ok(out)
}

/// Fits fusion weights per combo and criterion from inner out-of-sample
/// training predictions, then applies them to the test rows.
fn run_fold_fusion(
    ds: &Dataset,
    rows_by_family: &BTreeMap<FeatureFamily, Vec<Vec<f64>>>,
    fold: &Fold,
    config: &ExperimentConfig,
    needed: &[FeatureFamily],
    family_preds: &BTreeMap<FeatureFamily, Vec<Vec<f64>>>,
    out: &mut FoldOutput,
) -> Result<(), EvalError> {
    let train = &fold.train;
    let test = &fold.test;
    let train_set: HashSet<usize> = train.iter().cloned().collect();
    let labels = |i: usize| &ds.trials()[i].labels;
    let train_surgeons: Vec<String> = train
        .iter()
        .map(|i| ds.trials()[*i].surgeon_id.clone())
        .collect();

    // The inner predictions are per (family, criterion); one wide matrix
    // per criterion serves every combo by column selection.
    let fusion_families: Vec<FeatureFamily> = {
        let mut set: BTreeSet<FeatureFamily> = BTreeSet::new();
        for combo in &config.combos {
            set.extend(combo.iter().cloned());
        }
        set.into_iter().collect()
    };
    let features_map: BTreeMap<FeatureFamily, Vec<Vec<f64>>> = fusion_families
        .iter()
        .map(|f| (*f, gather_rows(&rows_by_family[f], train, &train_set)))
        .collect();
    let family_params: BTreeMap<FeatureFamily, FamilyParams> = needed
        .iter()
        .map(|f| (*f, FamilyParams::from_feature_params(*f, &config.feature_params)))
        .collect();

    let mut combo_cells: BTreeMap<String, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    let mut combo_weights: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();

    for (ci, target) in ScoreTarget::ALL.iter().enumerate() {
        let train_scores: Vec<f64> = train.iter().map(|i| labels(*i).score(*target)).collect();
        let inputs = FusionTrainingInputs {
            features: &features_map,
            surgeons: &train_surgeons,
            scores: &train_scores,
            criterion: *target,
        };
        let (y_wide, g) = build_fusion_training_matrix(
            &inputs,
            &fusion_families,
            &family_params,
            &config.pred_hyper,
            config.seed,
        )?;

        for combo in &config.combos {
            let key = combo_key(combo);
            let cols: Vec<usize> = combo
                .iter()
                .map(|f| fusion_families.iter().position(|g| g == f).unwrap())
                .collect();
            let mut y = DMatrix::<f64>::zeros(y_wide.nrows(), cols.len());
            for (c_new, c_old) in cols.iter().enumerate() {
                y.column_mut(c_new).copy_from(&y_wide.column(*c_old));
            }
            let model = fit_fusion(&y, &g, combo.clone())?;

            let mut pairs = Vec::with_capacity(test.len());
            for (t_i, &trial) in test.iter().enumerate() {
                let row: Vec<f64> = combo
                    .iter()
                    .map(|f| family_preds[f][ci][t_i])
                    .collect();
                let fused = fused_predict(&model, combo, &row)?;
                pairs.push((fused, labels(trial).score(*target)));
            }
            combo_cells
                .entry(key.clone())
                .or_insert_with(|| vec![Vec::new(); ScoreTarget::ALL.len()])[ci] = pairs;
            combo_weights
                .entry(key)
                .or_insert_with(|| vec![Vec::new(); ScoreTarget::ALL.len()])[ci] =
                model.weights().iter().cloned().collect();
        }
    }

    out.pred_pairs.extend(combo_cells);
    out.weights.extend(combo_weights);
    Ok(())
}

fn aggregate(
    report: &mut ExperimentReport,
    notes: &mut BTreeSet<String>,
    task: Task,
    scheme: Scheme,
    config: &ExperimentConfig,
    outputs: &[FoldOutput],
) -> Result<(), EvalError> {
    let task_key = task.to_string();
    let scheme_key = scheme.to_string();

    // classification accuracy, pooled over folds
    for &family in &config.families {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fo in outputs {
            if let Some(pairs) = fo.class_pairs.get(&family) {
                total += pairs.len();
                correct += pairs.iter().filter(|(p, t)| p == t).count();
            }
        }
        let cell = ClassificationCell {
            accuracy: 100.0 * correct as f64 / total.max(1) as f64,
            n: total,
        };
        report
            .classification
            .entry(task_key.clone())
            .or_default()
            .entry(scheme_key.clone())
            .or_default()
            .insert(family.to_string(), cell);
    }

    // prediction rho per featureset and criterion
    for fs in &report.meta.featureset_order {
        let mut criteria = BTreeMap::new();
        for (ci, target) in ScoreTarget::ALL.iter().enumerate() {
            let cell = match config.rho_mode {
                RhoMode::Pooled => {
                    let mut preds = Vec::new();
                    let mut truths = Vec::new();
                    for fo in outputs {
                        if let Some(per_criterion) = fo.pred_pairs.get(fs) {
                            for (p, t) in &per_criterion[ci] {
                                preds.push(*p);
                                truths.push(*t);
                            }
                        }
                    }
                    let corr = match config.permutation_p_draws {
                        Some(draws) => spearman_permutation_p(
                            &preds,
                            &truths,
                            draws,
                            config.seed.wrapping_add(ci as u64),
                        )?,
                        None => spearman(&preds, &truths)?,
                    };
                    match corr {
                        Correlation::Defined { rho, p } => CorrCell {
                            rho: Some(rho),
                            p: Some(p),
                            n: preds.len(),
                            degenerate: 0,
                        },
                        Correlation::Degenerate => CorrCell {
                            rho: None,
                            p: None,
                            n: preds.len(),
                            degenerate: 1,
                        },
                    }
                }
                RhoMode::FoldMean => {
                    let mut rhos = Vec::new();
                    let mut degenerate = 0usize;
                    let mut n = 0usize;
                    for fo in outputs {
                        if let Some(per_criterion) = fo.pred_pairs.get(fs) {
                            let (preds, truths): (Vec<f64>, Vec<f64>) =
                                per_criterion[ci].iter().cloned().unzip();
                            n += preds.len();
                            match spearman(&preds, &truths)? {
                                Correlation::Defined { rho, .. } => rhos.push(rho),
                                Correlation::Degenerate => degenerate += 1,
                            }
                        }
                    }
                    CorrCell {
                        rho: (!rhos.is_empty())
                            .then(|| rhos.iter().sum::<f64>() / rhos.len() as f64),
                        p: None,
                        n,
                        degenerate,
                    }
                }
            };
            if cell.degenerate > 0 {
                notes.insert(format!(
                    "{task_key}/{scheme_key}/{fs}/{target}: {} degenerate rho pool(s) excluded",
                    cell.degenerate
                ));
            }
            criteria.insert(target.to_string(), cell);
        }
        let osats: Vec<&CorrCell> = ScoreTarget::ALL[..6]
            .iter()
            .map(|t| &criteria[&t.to_string()])
            .collect();
        let defined: Vec<f64> = osats.iter().filter_map(|c| c.rho).collect();
        let osats_mean_rho = (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let osats_all_significant = osats
            .iter()
            .all(|c| c.rho.is_some() && c.p.map(|p| p < 0.05).unwrap_or(false));
        report
            .prediction
            .entry(task_key.clone())
            .or_default()
            .entry(scheme_key.clone())
            .or_default()
            .insert(
                fs.clone(),
                PredictionCell {
                    criteria,
                    osats_mean_rho,
                    osats_all_significant,
                },
            );
    }

    // fusion weight heatmaps: fold-averaged weights, min-max scaled
    for combo in &config.combos {
        let key = combo_key(combo);
        let n_crit = ScoreTarget::ALL.len();
        let mut sums = vec![vec![0.0; n_crit]; combo.len()];
        let mut count = 0usize;
        for fo in outputs {
            if let Some(per_criterion) = fo.weights.get(&key) {
                count += 1;
                for (ci, w) in per_criterion.iter().enumerate() {
                    for (fi, v) in w.iter().enumerate() {
                        sums[fi][ci] += v;
                    }
                }
            }
        }
        if count > 0 {
            for row in sums.iter_mut() {
                for v in row.iter_mut() {
                    *v /= count as f64;
                }
            }
        }
        let heatmap = FusionHeatmap {
            families: combo.iter().map(|f| f.to_string()).collect(),
            criteria: ScoreTarget::ALL.iter().map(|t| t.to_string()).collect(),
            scaled: scale_weights_per_criterion(&sums),
            mean_weights: sums,
        };
        report
            .fusion_weights
            .entry(task_key.clone())
            .or_default()
            .entry(scheme_key.clone())
            .or_default()
            .insert(key, heatmap);
    }

    for fo in outputs {
        notes.extend(fo.notes.iter().cloned());
    }
    Ok(())
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    fn column_keys(&self) -> Vec<(String, String)> {
        let mut cols = Vec::new();
        for (task, by_scheme) in &self.prediction {
            for scheme in by_scheme.keys() {
                cols.push((task.clone(), scheme.clone()));
            }
        }
        if cols.is_empty() {
            for (task, by_scheme) in &self.classification {
                for scheme in by_scheme.keys() {
                    cols.push((task.clone(), scheme.clone()));
                }
            }
        }
        cols
    }

    /// Self-proclaimed classification accuracies, families x (task, scheme).
    pub fn classification_table(&self) -> String {
        let cols = self.column_keys();
        let mut out = String::new();
        out.push_str(&format!("{:<18}", "family"));
        for (task, scheme) in &cols {
            out.push_str(&format!("{:>22}", format!("{task} {scheme}")));
        }
        out.push('\n');
        let mut families: BTreeSet<String> = BTreeSet::new();
        for by_scheme in self.classification.values() {
            for by_family in by_scheme.values() {
                families.extend(by_family.keys().cloned());
            }
        }
        for family in families {
            out.push_str(&format!("{family:<18}"));
            for (task, scheme) in &cols {
                let cell = self
                    .classification
                    .get(task)
                    .and_then(|s| s.get(scheme))
                    .and_then(|f| f.get(&family));
                match cell {
                    Some(c) => out.push_str(&format!("{:>22}", format!("{:.1}", c.accuracy))),
                    None => out.push_str(&format!("{:>22}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Score-prediction rho table, featuresets x (task, scheme); each cell
    /// is `rho_OSATS | rho_GRS` with `*` marking p < 0.05 (the OSATS mean
    /// is starred when all six criteria are significant).
    pub fn prediction_table(&self) -> String {
        let cols = self.column_keys();
        let mut out = String::new();
        out.push_str(&format!("{:<22}", "features"));
        for (task, scheme) in &cols {
            out.push_str(&format!("{:>26}", format!("{task} {scheme}")));
        }
        out.push('\n');
        for fs in &self.meta.featureset_order {
            out.push_str(&format!("{fs:<22}"));
            for (task, scheme) in &cols {
                let cell = self
                    .prediction
                    .get(task)
                    .and_then(|s| s.get(scheme))
                    .and_then(|f| f.get(fs));
                out.push_str(&format!("{:>26}", cell.map_or("-".into(), format_cell)));
            }
            out.push('\n');
        }
        out
    }

    /// Per-featureset rho averaged over every task present, per scheme.
    pub fn averaged_table(&self) -> String {
        let mut schemes: BTreeSet<String> = BTreeSet::new();
        for by_scheme in self.prediction.values() {
            schemes.extend(by_scheme.keys().cloned());
        }
        let mut out = String::new();
        out.push_str(&format!("{:<22}", "features"));
        for scheme in &schemes {
            out.push_str(&format!("{:>26}", scheme));
        }
        out.push('\n');
        for fs in &self.meta.featureset_order {
            out.push_str(&format!("{fs:<22}"));
            for scheme in &schemes {
                let mut osats = Vec::new();
                let mut grs = Vec::new();
                for by_scheme in self.prediction.values() {
                    if let Some(cell) = by_scheme.get(scheme).and_then(|f| f.get(fs)) {
                        if let Some(v) = cell.osats_mean_rho {
                            osats.push(v);
                        }
                        if let Some(v) = cell.criteria.get("GRS").and_then(|c| c.rho) {
                            grs.push(v);
                        }
                    }
                }
                let mean = |v: &[f64]| -> String {
                    if v.is_empty() {
                        "-".into()
                    } else {
                        format!("{:.2}", v.iter().sum::<f64>() / v.len() as f64)
                    }
                };
                out.push_str(&format!(
                    "{:>26}",
                    format!("{} | {}", mean(&osats), mean(&grs))
                ));
            }
            out.push('\n');
        }
        out
    }

    /// One `(file name, CSV)` pair per (task, scheme, combo) heatmap.
    pub fn heatmap_csvs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (task, by_scheme) in &self.fusion_weights {
            for (scheme, by_combo) in by_scheme {
                for (combo, heatmap) in by_combo {
                    let name = format!("heatmap_{task}_{scheme}_{combo}.csv");
                    let mut csv = String::from("family");
                    for c in &heatmap.criteria {
                        csv.push_str(&format!(",{c}"));
                    }
                    csv.push('\n');
                    for (fi, family) in heatmap.families.iter().enumerate() {
                        csv.push_str(family);
                        for v in &heatmap.scaled[fi] {
                            csv.push_str(&format!(",{v:.6}"));
                        }
                        csv.push('\n');
                    }
                    out.push((name, csv));
                }
            }
        }
        out
    }
}

fn format_cell(cell: &PredictionCell) -> String {
    let osats = match cell.osats_mean_rho {
        Some(v) => format!("{v:.2}{}", if cell.osats_all_significant { "*" } else { "" }),
        None => "deg".into(),
    };
    let grs = match cell.criteria.get("GRS") {
        Some(c) => match c.rho {
            Some(v) => format!(
                "{v:.2}{}",
                if c.p.map(|p| p < 0.05).unwrap_or(false) {
                    "*"
                } else {
                    ""
                }
            ),
            None => "deg".into(),
        },
        None => "-".into(),
    };
    format!("{osats} | {grs}")
}
