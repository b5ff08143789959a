//! Cross-validation protocols, rank statistics, and the experiment
//! runner that produces classification/prediction report tables.

mod runner;
mod stats;

pub use runner::{
    run_experiment, ClassificationCell, ExperimentConfig, ExperimentReport, FusionHeatmap,
    PredictionCell, ReportMeta, RhoMode,
};
pub use stats::{average_ranks, spearman, spearman_permutation_p, Correlation};

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::features::FeatureError;
use crate::fusion::FusionError;
use crate::models::ModelError;
use crate::pipeline::PipelineError;
use crate::reduce::ReduceError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),
    #[error("input lengths differ: {a} vs {b}")]
    ShapeMismatch { a: usize, b: usize },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("fold {fold}: {source}")]
    FoldContext {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

impl EvalError {
    pub(crate) fn in_fold(self, fold: usize) -> EvalError {
        EvalError::FoldContext {
            fold,
            source: Box::new(self),
        }
    }
}

/// Cross-validation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Leave-one-supertrial-out: one random trial per surgeon held out,
    /// repeated.
    Loso,
    /// Leave-one-user-out: all trials of one surgeon held out.
    Louo,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Scheme, EvalError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "loso" => Ok(Scheme::Loso),
            "louo" => Ok(Scheme::Louo),
            other => Err(EvalError::BadInput(format!("unknown scheme `{other}`"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Loso => "LOSO",
            Scheme::Louo => "LOUO",
        })
    }
}

/// One train/test partition, as indices into the dataset's trial list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A full cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub scheme: Scheme,
    pub folds: Vec<Fold>,
    pub repeats: usize,
    pub seed: u64,
}

/// Builds the fold plan. LOSO draws one random trial per surgeon per
/// fold (fold `i` uses the rng seeded with `seed + i`) and emits
/// `repeats` folds; LOUO emits one deterministic fold per surgeon.
pub fn make_splits(
    dataset: &Dataset,
    scheme: Scheme,
    repeats: usize,
    seed: u64,
) -> Result<SplitPlan, EvalError> {
    let surgeons = dataset.surgeons();
    if surgeons.is_empty() {
        return Err(EvalError::InsufficientTrials("dataset is empty".into()));
    }
    let mut by_surgeon: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in dataset.trials().iter().enumerate() {
        by_surgeon.entry(t.surgeon_id.as_str()).or_default().push(i);
    }

    let folds = match scheme {
        Scheme::Louo => {
            if surgeons.len() < 2 {
                return Err(EvalError::InsufficientTrials(format!(
                    "LOUO needs >= 2 surgeons, got {}",
                    surgeons.len()
                )));
            }
            surgeons
                .iter()
                .map(|s| {
                    let test = by_surgeon[s.as_str()].clone();
                    let train = (0..dataset.len()).filter(|i| !test.contains(i)).collect();
                    Fold { train, test }
                })
                .collect()
        }
        Scheme::Loso => {
            for (s, idxs) in &by_surgeon {
                if idxs.len() < 2 {
                    return Err(EvalError::InsufficientTrials(format!(
                        "LOSO needs >= 2 trials per surgeon; surgeon {s} has {}",
                        idxs.len()
                    )));
                }
            }
            if repeats == 0 {
                return Err(EvalError::BadInput("LOSO needs repeats >= 1".into()));
            }
            (0..repeats)
                .map(|fold| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(fold as u64));
                    let mut test = Vec::with_capacity(surgeons.len());
                    for s in &surgeons {
                        let idxs = &by_surgeon[s.as_str()];
                        test.push(idxs[rng.gen_range(0..idxs.len())]);
                    }
                    let train = (0..dataset.len()).filter(|i| !test.contains(i)).collect();
                    Fold { train, test }
                })
                .collect()
        }
    };
    let plan = SplitPlan {
        scheme,
        folds,
        repeats: match scheme {
            Scheme::Loso => repeats,
            Scheme::Louo => 1,
        },
        seed,
    };
    for fold in &plan.folds {
        debug_assert!(fold.train.iter().all(|i| !fold.test.contains(i)));
        debug_assert!(!fold.train.is_empty() && !fold.test.is_empty());
    }
    Ok(plan)
}
