//! Holistic feature extraction from kinematic series.
//!
//! Four families: sequential motion texture (GLCM statistics of windowed
//! frame kernel matrices), DCT and DFT spectra truncated to the lowest
//! coefficients, and approximate entropy over a radius grid. All
//! extractors are pure and deterministic.

mod apen;
mod freq;
mod smt;

pub use apen::{apen, apen_features, neighbor_counts, population_std};
pub use freq::{dct_features, dct_ortho, dft_features, dft_magnitudes};
pub use smt::{frame_kernel, glcm_stats, quantize_kernel, smt_features, symmetric_glcm};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{KinematicSeries, TrialRecord};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("channel {channel}: signal of length {got} too short, need at least {needed}")]
    SignalTooShort {
        channel: usize,
        needed: usize,
        got: usize,
    },
    #[error("series of {got} frames too short for {n_windows} windows (need >= {needed})")]
    TooFewFrames {
        n_windows: usize,
        needed: usize,
        got: usize,
    },
}

/// The four holistic feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureFamily {
    Smt,
    Dct,
    Dft,
    ApEn,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::Smt,
        FeatureFamily::Dct,
        FeatureFamily::Dft,
        FeatureFamily::ApEn,
    ];

    pub fn parse(s: &str) -> Result<FeatureFamily, FeatureError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "smt" => Ok(FeatureFamily::Smt),
            "dct" => Ok(FeatureFamily::Dct),
            "dft" => Ok(FeatureFamily::Dft),
            "apen" => Ok(FeatureFamily::ApEn),
            other => Err(FeatureError::BadParam(format!("unknown family `{other}`"))),
        }
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureFamily::Smt => "SMT",
            FeatureFamily::Dct => "DCT",
            FeatureFamily::Dft => "DFT",
            FeatureFamily::ApEn => "ApEn",
        })
    }
}

/// Where a feature vector came from: trial identity plus a hash of the
/// extraction parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub trial: String,
    pub params_hash: u64,
}

/// One extracted holistic feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub family: FeatureFamily,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the ApEn radius grid is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadiusMode {
    /// Each radius is a fraction of the signal's population standard deviation.
    StdScaled,
    /// Each radius is used as-is.
    Absolute,
}

/// Approximate-entropy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApEnParams {
    pub m: usize,
    pub tau: usize,
    pub radii: Vec<f64>,
    pub radius_mode: RadiusMode,
}

impl Default for ApEnParams {
    fn default() -> Self {
        ApEnParams {
            m: 1,
            tau: 1,
            radii: vec![0.1, 0.13, 0.16, 0.19, 0.22, 0.25],
            radius_mode: RadiusMode::StdScaled,
        }
    }
}

impl ApEnParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.m < 1 {
            return Err(FeatureError::BadParam("m must be >= 1".into()));
        }
        if self.tau < 1 {
            return Err(FeatureError::BadParam("tau must be >= 1".into()));
        }
        if self.radii.is_empty() {
            return Err(FeatureError::BadParam("radius grid is empty".into()));
        }
        for pair in self.radii.windows(2) {
            if pair[1] <= pair[0] {
                return Err(FeatureError::BadParam(
                    "radii must be strictly increasing".into(),
                ));
            }
        }
        if self.radii[0] <= 0.0 || !self.radii.iter().all(|r| r.is_finite()) {
            return Err(FeatureError::BadParam(
                "radii must be finite and strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// The four unit GLCM displacement vectors, as (row, col) offsets.
pub const GLCM_OFFSETS: [(i32, i32); 4] = [(0, 1), (1, 1), (1, 0), (1, -1)];

/// Per-GLCM statistics, emitted in this order for each offset.
pub const GLCM_STAT_NAMES: [&str; 5] =
    ["contrast", "correlation", "energy", "homogeneity", "entropy"];

/// Sequential-motion-texture parameters. Each window contributes
/// `GLCM_OFFSETS.len() * GLCM_STAT_NAMES.len()` = 20 features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtParams {
    pub n_windows: usize,
    pub gray_levels: usize,
    pub offsets: [(i32, i32); 4],
}

impl Default for SmtParams {
    fn default() -> Self {
        SmtParams {
            n_windows: 10,
            gray_levels: 8,
            offsets: GLCM_OFFSETS,
        }
    }
}

impl SmtParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.n_windows < 1 {
            return Err(FeatureError::BadParam("n_windows must be >= 1".into()));
        }
        if self.gray_levels < 2 {
            return Err(FeatureError::BadParam("gray_levels must be >= 2".into()));
        }
        Ok(())
    }

    /// Features contributed by one window.
    pub fn per_window(&self) -> usize {
        self.offsets.len() * GLCM_STAT_NAMES.len()
    }
}

/// Extraction parameters for every family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub q_dct: usize,
    pub q_dft: usize,
    pub apen: ApEnParams,
    pub smt: SmtParams,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            q_dct: 50,
            q_dft: 50,
            apen: ApEnParams::default(),
            smt: SmtParams::default(),
        }
    }
}

impl FeatureParams {
    /// Stable hash of one family's parameters (FNV-1a over the canonical
    /// debug rendering, so it is reproducible across runs and platforms).
    pub fn family_hash(&self, family: FeatureFamily) -> u64 {
        let canon = match family {
            FeatureFamily::Dct => format!("DCT q={}", self.q_dct),
            FeatureFamily::Dft => format!("DFT q={}", self.q_dft),
            FeatureFamily::ApEn => format!("ApEn {:?}", self.apen),
            FeatureFamily::Smt => format!("SMT {:?}", self.smt),
        };
        fnv1a_str(&canon)
    }
}

pub(crate) fn fnv1a_str(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub(crate) fn tag(family: FeatureFamily, values: Vec<f64>, params_hash: u64) -> FeatureVector {
    FeatureVector {
        family,
        values,
        provenance: Provenance {
            trial: String::new(),
            params_hash,
        },
    }
}

/// Extracts `family`'s feature vector for a trial, stamping provenance.
pub fn featurize(
    trial: &TrialRecord,
    family: FeatureFamily,
    params: &FeatureParams,
) -> Result<FeatureVector, FeatureError> {
    let mut fv = extract(&trial.series, family, params)?;
    fv.provenance.trial = trial.id();
    Ok(fv)
}

/// Extracts `family`'s feature vector for a bare series.
pub fn extract(
    series: &KinematicSeries,
    family: FeatureFamily,
    params: &FeatureParams,
) -> Result<FeatureVector, FeatureError> {
    match family {
        FeatureFamily::Dct => dct_features(series, params.q_dct),
        FeatureFamily::Dft => dft_features(series, params.q_dft),
        FeatureFamily::ApEn => apen_features(series, &params.apen),
        FeatureFamily::Smt => smt_features(series, &params.smt),
    }
}

/// CSV with one row per feature vector: `surgeon,task,trial` identity
/// columns followed by `<FAMILY>_<index>` value columns.
pub fn features_to_csv(rows: &[(&TrialRecord, &FeatureVector)]) -> String {
    let mut out = String::new();
    if rows.is_empty() {
        return out;
    }
    let family = rows[0].1.family;
    let width = rows[0].1.len();
    out.push_str("surgeon,task,trial");
    for i in 0..width {
        out.push_str(&format!(",{family}_{i}"));
    }
    out.push('\n');
    for (trial, fv) in rows {
        out.push_str(&format!(
            "{},{},{}",
            trial.surgeon_id, trial.task, trial.trial_index
        ));
        for v in &fv.values {
            out.push_str(&format!(",{v:.12e}"));
        }
        out.push('\n');
    }
    out
}
