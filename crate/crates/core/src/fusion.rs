//! Least-squares fusion of per-family score predictions.
//!
//! The fusion weights solve `min ||Y w - G||^2` over the matrix of
//! per-family training predictions; rank-deficient systems take the
//! minimum-norm solution. Training predictions are produced out-of-sample
//! by an inner leave-one-surgeon-out over the training fold, so the
//! weights cannot reward families that merely memorize training trials.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::ScoreTarget;
use crate::features::FeatureFamily;
use crate::pipeline::{FamilyParams, PipelineError, PipelineHyper, TrainedPipeline};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape mismatch: Y has {rows} rows, G has {len}")]
    ShapeMismatch { rows: usize, len: usize },
    #[error("family order mismatch: model fuses {expected:?}, row carries {got:?}")]
    OrderMismatch {
        expected: Vec<FeatureFamily>,
        got: Vec<FeatureFamily>,
    },
    #[error("inner split needs >= 2 surgeons in the training fold, got {0}")]
    TooFewSurgeons(usize),
    #[error("missing feature rows for family {0}")]
    MissingFamily(FeatureFamily),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Fitted fusion weights over an ordered family list.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    families: Vec<FeatureFamily>,
    weights: DVector<f64>,
    training_residual: f64,
}

impl FusionModel {
    pub fn families(&self) -> &[FeatureFamily] {
        &self.families
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `||Y w* - G||_2` on the training matrix.
    pub fn training_residual(&self) -> f64 {
        self.training_residual
    }
}

/// Minimum-norm least-squares fit of `min ||Y w - G||^2`.
pub fn fit_fusion(
    y: &DMatrix<f64>,
    g: &DVector<f64>,
    families: Vec<FeatureFamily>,
) -> Result<FusionModel, FusionError> {
    if y.nrows() != g.len() {
        return Err(FusionError::ShapeMismatch {
            rows: y.nrows(),
            len: g.len(),
        });
    }
    if y.ncols() != families.len() {
        return Err(FusionError::ShapeMismatch {
            rows: y.ncols(),
            len: families.len(),
        });
    }
    let svd = y.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = max_sv * f64::EPSILON * y.nrows().max(y.ncols()) as f64;
    let weights = svd
        .solve(g, eps)
        .expect("svd computed with u and v_t")
        .column(0)
        .into_owned();
    let training_residual = (y * &weights - g).norm();
    Ok(FusionModel {
        families,
        weights,
        training_residual,
    })
}

/// Dot product of a per-family prediction row with the fitted weights.
/// The row's family tags must match the model's order exactly.
pub fn fused_predict(
    model: &FusionModel,
    families: &[FeatureFamily],
    row: &[f64],
) -> Result<f64, FusionError> {
    if families != model.families.as_slice() {
        return Err(FusionError::OrderMismatch {
            expected: model.families.clone(),
            got: families.to_vec(),
        });
    }
    if row.len() != model.weights.len() {
        return Err(FusionError::ShapeMismatch {
            rows: row.len(),
            len: model.weights.len(),
        });
    }
    Ok(model.weights.dot(&DVector::from_column_slice(row)))
}

/// Training-fold inputs for [`build_fusion_training_matrix`]: per-family
/// raw feature rows aligned with `surgeons` and `scores`.
pub struct FusionTrainingInputs<'a> {
    pub features: &'a BTreeMap<FeatureFamily, Vec<Vec<f64>>>,
    pub surgeons: &'a [String],
    pub scores: &'a [f64],
    pub criterion: ScoreTarget,
}

/// Builds the fusion training matrix: entry `(i, f)` is the prediction
/// for training trial `i` by family `f`'s pipeline fitted on the inner
/// split that excludes trial `i`'s surgeon (inner leave-one-user-out).
///
/// `inner_split_seed` is accepted for interface stability; the inner
/// split is the deterministic leave-one-surgeon-out, so no randomness is
/// consumed today.
pub fn build_fusion_training_matrix(
    inputs: &FusionTrainingInputs<'_>,
    families: &[FeatureFamily],
    family_params: &BTreeMap<FeatureFamily, FamilyParams>,
    hyper: &BTreeMap<FeatureFamily, PipelineHyper>,
    _inner_split_seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>), FusionError> {
    let n = inputs.surgeons.len();
    debug_assert_eq!(inputs.scores.len(), n);
    let mut distinct: Vec<&String> = inputs.surgeons.iter().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(FusionError::TooFewSurgeons(distinct.len()));
    }

    let mut y = DMatrix::<f64>::zeros(n, families.len());
    for (f_idx, family) in families.iter().enumerate() {
        let rows = inputs
            .features
            .get(family)
            .ok_or(FusionError::MissingFamily(*family))?;
        let params = family_params
            .get(family)
            .ok_or(FusionError::MissingFamily(*family))?;
        let h = hyper
            .get(family)
            .ok_or(FusionError::MissingFamily(*family))?;
        for surgeon in &distinct {
            let inner_train: Vec<usize> = (0..n)
                .filter(|i| &&inputs.surgeons[*i] != surgeon)
                .collect();
            let held_out: Vec<usize> = (0..n)
                .filter(|i| &&inputs.surgeons[*i] == surgeon)
                .collect();
            let train_rows: Vec<Vec<f64>> =
                inner_train.iter().map(|i| rows[*i].clone()).collect();
            let train_scores: Vec<f64> =
                inner_train.iter().map(|i| inputs.scores[*i]).collect();
            let pipeline = TrainedPipeline::fit(
                &train_rows,
                &train_scores,
                inputs.criterion,
                params.clone(),
                *h,
            )?;
            for i in held_out {
                y[(i, f_idx)] = pipeline.predict_features(&rows[i])?;
            }
        }
    }
    Ok((y, DVector::from_column_slice(inputs.scores)))
}

/// Min-max scales each criterion's weight vector to [0, 1] across
/// families; a flat column maps to 0.5 everywhere.
pub fn scale_weights_per_criterion(weights: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if weights.is_empty() {
        return Vec::new();
    }
    let n_fam = weights.len();
    let n_crit = weights[0].len();
    let mut scaled = vec![vec![0.0; n_crit]; n_fam];
    for c in 0..n_crit {
        let col: Vec<f64> = (0..n_fam).map(|f| weights[f][c]).collect();
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for f in 0..n_fam {
            scaled[f][c] = if max > min {
                (col[f] - min) / (max - min)
            } else {
                0.5
            };
        }
    }
    scaled
}

/// Heatmap CSV: rows = families, columns = the seven score targets,
/// values min-max scaled to [0, 1] per criterion.
pub fn heatmap_csv(families: &[FeatureFamily], scaled: &[Vec<f64>]) -> String {
    let mut out = String::from("family");
    for target in ScoreTarget::ALL {
        out.push_str(&format!(",{target}"));
    }
    out.push('\n');
    for (f, family) in families.iter().enumerate() {
        out.push_str(&family.to_string());
        for c in 0..ScoreTarget::ALL.len() {
            out.push_str(&format!(",{:.6}", scaled[f][c]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_single_predictor() {
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = DMatrix::from_column_slice(4, 1, g.as_slice());
        let model = fit_fusion(&y, &g, vec![FeatureFamily::Dct]).unwrap();
        assert!((model.weights()[0] - 1.0).abs() < 1e-12);
        assert!(model.training_residual() < 1e-12);
    }

    #[test]
    fn duplicate_columns_split_the_weight() {
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut y = DMatrix::<f64>::zeros(5, 2);
        y.column_mut(0).copy_from(&g);
        y.column_mut(1).copy_from(&g);
        let model = fit_fusion(&y, &g, vec![FeatureFamily::Dct, FeatureFamily::Dft]).unwrap();
        assert!((model.weights()[0] - 0.5).abs() < 1e-10);
        assert!((model.weights()[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_column_gets_zero_weight() {
        let g = DVector::from_vec(vec![2.0, -1.0, 0.5, 3.0]);
        let mut y = DMatrix::<f64>::zeros(4, 2);
        y.column_mut(0).copy_from(&g);
        let model = fit_fusion(&y, &g, vec![FeatureFamily::Dct, FeatureFamily::Smt]).unwrap();
        assert!(model.weights()[1].abs() < 1e-12);
        assert!(model.training_residual() < 1e-12);
    }

    #[test]
    fn fused_predict_checks_family_order() {
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let y = DMatrix::from_column_slice(2, 1, g.as_slice());
        let model = fit_fusion(&y, &g, vec![FeatureFamily::Dct]).unwrap();
        assert!(matches!(
            fused_predict(&model, &[FeatureFamily::Dft], &[1.0]),
            Err(FusionError::OrderMismatch { .. })
        ));
        assert_eq!(
            fused_predict(&model, &[FeatureFamily::Dct], &[4.2]).unwrap(),
            4.2 * model.weights()[0]
        );
    }

    #[test]
    fn one_hot_weights_reproduce_single_family() {
        let model = FusionModel {
            families: vec![FeatureFamily::Dct, FeatureFamily::Dft],
            weights: DVector::from_vec(vec![1.0, 0.0]),
            training_residual: 0.0,
        };
        let v = fused_predict(
            &model,
            &[FeatureFamily::Dct, FeatureFamily::Dft],
            &[4.2, 99.0],
        )
        .unwrap();
        assert_eq!(v, 4.2);
        let half = FusionModel {
            families: vec![FeatureFamily::Dct, FeatureFamily::Dft],
            weights: DVector::from_vec(vec![0.5, 0.5]),
            training_residual: 0.0,
        };
        assert_eq!(
            fused_predict(&half, &[FeatureFamily::Dct, FeatureFamily::Dft], &[3.0, 5.0]).unwrap(),
            4.0
        );
    }

    #[test]
    fn flat_heatmap_column_maps_to_half() {
        let scaled = scale_weights_per_criterion(&[vec![0.3; 7], vec![0.3; 7]]);
        assert!(scaled.iter().flatten().all(|v| *v == 0.5));
    }
}
