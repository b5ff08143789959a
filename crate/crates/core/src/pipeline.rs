//! A trained per-family prediction pipeline: feature params, a fitted PCA
//! basis, and a fitted linear SVR for one score target. Bundles serialize
//! to a flat text format carrying the params hash so downstream stages
//! can reuse the exact training-fold pipeline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{KinematicSeries, ScoreTarget};
use crate::features::{
    apen_features, dct_features, dft_features, smt_features, ApEnParams, FeatureError,
    FeatureFamily, FeatureVector, SmtParams,
};
use crate::models::{svr_fit, svr_predict, LinearSvrModel, ModelError};
use crate::reduce::{pca_fit, PcaModel, ReduceError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("pipeline is for {expected} features, got {got}")]
    FamilyMismatch {
        expected: FeatureFamily,
        got: FeatureFamily,
    },
    #[error("bad pipeline text: {0}")]
    Parse(String),
}

/// The extraction parameters of exactly one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyParams {
    Dct { q: usize },
    Dft { q: usize },
    ApEn(ApEnParams),
    Smt(SmtParams),
}

impl FamilyParams {
    pub fn family(&self) -> FeatureFamily {
        match self {
            FamilyParams::Dct { .. } => FeatureFamily::Dct,
            FamilyParams::Dft { .. } => FeatureFamily::Dft,
            FamilyParams::ApEn(_) => FeatureFamily::ApEn,
            FamilyParams::Smt(_) => FeatureFamily::Smt,
        }
    }

    pub fn from_feature_params(
        family: FeatureFamily,
        params: &crate::features::FeatureParams,
    ) -> FamilyParams {
        match family {
            FeatureFamily::Dct => FamilyParams::Dct { q: params.q_dct },
            FeatureFamily::Dft => FamilyParams::Dft { q: params.q_dft },
            FeatureFamily::ApEn => FamilyParams::ApEn(params.apen.clone()),
            FeatureFamily::Smt => FamilyParams::Smt(params.smt),
        }
    }

    pub fn extract(&self, series: &KinematicSeries) -> Result<FeatureVector, FeatureError> {
        match self {
            FamilyParams::Dct { q } => dct_features(series, *q),
            FamilyParams::Dft { q } => dft_features(series, *q),
            FamilyParams::ApEn(p) => apen_features(series, p),
            FamilyParams::Smt(p) => smt_features(series, p),
        }
    }
}

/// PCA/SVR hyperparameters for one (family, prediction) pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineHyper {
    pub k_pca: usize,
    pub c: f64,
    pub epsilon: f64,
}

/// A per-family score prediction pipeline fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub criterion: ScoreTarget,
    pub family_params: FamilyParams,
    pub pca: PcaModel,
    pub svr: LinearSvrModel,
    pub params_hash: u64,
}

impl TrainedPipeline {
    pub fn family(&self) -> FeatureFamily {
        self.family_params.family()
    }

    /// Fits PCA on the raw training feature rows, then the SVR on the
    /// reduced coordinates against `scores`.
    pub fn fit(
        rows: &[Vec<f64>],
        scores: &[f64],
        criterion: ScoreTarget,
        family_params: FamilyParams,
        hyper: PipelineHyper,
    ) -> Result<TrainedPipeline, PipelineError> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        let x = DMatrix::from_row_slice(n, p, &flat);
        let pca = pca_fit(&x, hyper.k_pca)?;
        let mut reduced = DMatrix::<f64>::zeros(n, pca.k());
        for (i, row) in rows.iter().enumerate() {
            let z = pca.transform(&DVector::from_column_slice(row))?;
            reduced.row_mut(i).copy_from(&z.transpose());
        }
        let svr = svr_fit(&reduced, scores, hyper.c, hyper.epsilon)?;
        let params_hash = crate::features::fnv1a_str(&format!(
            "{criterion:?}|{family_params:?}|k={} c={} eps={}",
            hyper.k_pca, hyper.c, hyper.epsilon
        ));
        Ok(TrainedPipeline {
            criterion,
            family_params,
            pca,
            svr,
            params_hash,
        })
    }

    /// Predicts from a raw feature row: PCA transform then SVR.
    pub fn predict_features(&self, values: &[f64]) -> Result<f64, PipelineError> {
        let z = self.pca.transform(&DVector::from_column_slice(values))?;
        Ok(svr_predict(&self.svr, &z)?)
    }

    /// Predicts from a tagged feature vector, rejecting family mismatches.
    pub fn predict_vector(&self, fv: &FeatureVector) -> Result<f64, PipelineError> {
        if fv.family != self.family() {
            return Err(PipelineError::FamilyMismatch {
                expected: self.family(),
                got: fv.family,
            });
        }
        self.predict_features(&fv.values)
    }

    /// Extracts this pipeline's features from a series and predicts.
    pub fn predict_series(&self, series: &KinematicSeries) -> Result<f64, PipelineError> {
        let fv = self.family_params.extract(series)?;
        self.predict_features(&fv.values)
    }

    /// Flat text bundle: header, family params (one JSON line), SVR
    /// weights, then the embedded PCA text block.
    pub fn to_text(&self) -> String {
        let mut out = String::from("skillseries-pipeline v1\n");
        out.push_str(&format!(
            "criterion={} params_hash={}\n",
            self.criterion, self.params_hash
        ));
        out.push_str(&serde_json::to_string(&self.family_params).expect("serializable params"));
        out.push('\n');
        out.push_str(&format!(
            "svr c={:.16e} epsilon={:.16e} bias={:.16e}\n",
            self.svr.c, self.svr.epsilon, self.svr.bias
        ));
        let weights: Vec<String> = self.svr.weights.iter().map(|w| format!("{w:.16e}")).collect();
        out.push_str(&weights.join(" "));
        out.push('\n');
        out.push_str(&self.pca.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<TrainedPipeline, PipelineError> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != "skillseries-pipeline v1" {
            return Err(PipelineError::Parse(format!("bad magic line `{magic}`")));
        }
        let header = lines
            .next()
            .ok_or_else(|| PipelineError::Parse("missing header".into()))?;
        let mut criterion = None;
        let mut params_hash = None;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| PipelineError::Parse(format!("bad header field `{field}`")))?;
            match key {
                "criterion" => {
                    criterion = Some(ScoreTarget::parse(value).map_err(|e| {
                        PipelineError::Parse(format!("bad criterion: {e}"))
                    })?)
                }
                "params_hash" => {
                    params_hash = Some(value.parse::<u64>().map_err(|_| {
                        PipelineError::Parse(format!("bad params_hash `{value}`"))
                    })?)
                }
                _ => return Err(PipelineError::Parse(format!("unknown header key `{key}`"))),
            }
        }
        let criterion =
            criterion.ok_or_else(|| PipelineError::Parse("missing criterion".into()))?;
        let params_hash =
            params_hash.ok_or_else(|| PipelineError::Parse("missing params_hash".into()))?;
        let params_line = lines
            .next()
            .ok_or_else(|| PipelineError::Parse("missing family params".into()))?;
        let family_params: FamilyParams = serde_json::from_str(params_line)
            .map_err(|e| PipelineError::Parse(format!("bad family params: {e}")))?;
        let svr_line = lines
            .next()
            .ok_or_else(|| PipelineError::Parse("missing svr line".into()))?;
        let mut c = None;
        let mut epsilon = None;
        let mut bias = None;
        for field in svr_line.split_whitespace().skip(1) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| PipelineError::Parse(format!("bad svr field `{field}`")))?;
            let parsed: f64 = value
                .parse()
                .map_err(|_| PipelineError::Parse(format!("bad svr value `{value}`")))?;
            match key {
                "c" => c = Some(parsed),
                "epsilon" => epsilon = Some(parsed),
                "bias" => bias = Some(parsed),
                _ => return Err(PipelineError::Parse(format!("unknown svr key `{key}`"))),
            }
        }
        let weights_line = lines
            .next()
            .ok_or_else(|| PipelineError::Parse("missing svr weights".into()))?;
        let weights: Result<Vec<f64>, _> =
            weights_line.split_whitespace().map(str::parse).collect();
        let weights =
            weights.map_err(|e| PipelineError::Parse(format!("bad svr weight: {e}")))?;
        let rest: Vec<&str> = lines.collect();
        let pca = PcaModel::from_text(&rest.join("\n"))?;
        let (c, epsilon, bias) = match (c, epsilon, bias) {
            (Some(c), Some(e), Some(b)) => (c, e, b),
            _ => return Err(PipelineError::Parse("incomplete svr line".into())),
        };
        Ok(TrainedPipeline {
            criterion,
            family_params,
            pca,
            svr: LinearSvrModel {
                weights: DVector::from_vec(weights),
                bias,
                c,
                epsilon,
            },
            params_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::data::Task;

    fn toy_pipeline() -> TrainedPipeline {
        let ds = synth_dataset(3, 2, Task::Suturing, 2, 210, 5).unwrap();
        let rows: Vec<Vec<f64>> = ds
            .trials()
            .iter()
            .map(|t| dct_features(&t.series, 8).unwrap().values)
            .collect();
        let scores: Vec<f64> = ds
            .trials()
            .iter()
            .map(|t| t.labels.score(ScoreTarget::Grs))
            .collect();
        TrainedPipeline::fit(
            &rows,
            &scores,
            ScoreTarget::Grs,
            FamilyParams::Dct { q: 8 },
            PipelineHyper {
                k_pca: 3,
                c: 1.0,
                epsilon: 0.1,
            },
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_preserves_predictions() {
        let pipeline = toy_pipeline();
        let back = TrainedPipeline::from_text(&pipeline.to_text()).unwrap();
        assert_eq!(pipeline, back);
        let probe = synth_dataset(3, 2, Task::Suturing, 2, 210, 6).unwrap();
        for trial in probe.trials() {
            let a = pipeline.predict_series(&trial.series).unwrap();
            let b = back.predict_series(&trial.series).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn family_mismatch_rejected() {
        let pipeline = toy_pipeline();
        let ds = synth_dataset(1, 1, Task::Suturing, 2, 210, 7).unwrap();
        let fv = dft_features(&ds.trials()[0].series, 8).unwrap();
        assert!(matches!(
            pipeline.predict_vector(&fv),
            Err(PipelineError::FamilyMismatch { .. })
        ));
    }
}
