//! Task highlights: per-window impact of each trial segment on the
//! predicted score. For every sliding-window position the DCT features
//! are re-inferred from the frames outside the window (a least-squares
//! solve against the truncated inverse cosine basis) and the impact is
//! the baseline prediction minus the prediction from inferred features.
//! Negative impact means the segment pulled the predicted score down.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{GestureId, GestureSegment, ScoreTarget, TrialRecord};
use crate::features::{dct_features, FeatureFamily};
use crate::pipeline::{FamilyParams, PipelineError, TrainedPipeline};

#[derive(Debug, Error)]
pub enum HighlightError {
    #[error("window of {window} frames leaves {remaining} rows, fewer than q = {q}")]
    WindowTooLarge {
        window: usize,
        remaining: usize,
        q: usize,
        max_window: usize,
    },
    #[error("bad frame range [{n1}, {n2}) for {l} frames")]
    BadRange { n1: usize, n2: usize, l: usize },
    #[error("highlights need a DCT pipeline, got {0}")]
    PipelineFamilyMismatch(FeatureFamily),
    #[error("pipeline predicts {expected}, asked for {got}")]
    CriterionMismatch {
        expected: ScoreTarget,
        got: ScoreTarget,
    },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Truncated orthonormal DCT-II basis for a fixed frame count: `forward`
/// holds the q lowest basis rows (q x L) and `inverse` their transpose
/// (L x q). `forward * inverse` is the q x q identity.
#[derive(Debug, Clone)]
pub struct DctBasis {
    l: usize,
    q: usize,
    forward: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl DctBasis {
    pub fn new(l: usize, q: usize) -> Result<DctBasis, HighlightError> {
        if l < 2 || q < 1 || q > l {
            return Err(HighlightError::BadParam(format!(
                "basis needs 1 <= q <= L, got q={q}, L={l}"
            )));
        }
        let scale0 = 1.0 / (l as f64).sqrt();
        let scale = (2.0 / l as f64).sqrt();
        let forward = DMatrix::from_fn(q, l, |k, n| {
            let angle =
                std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2.0 * l as f64);
            angle.cos() * if k == 0 { scale0 } else { scale }
        });
        let inverse = forward.transpose();
        Ok(DctBasis { l, q, forward, inverse })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn forward(&self) -> &DMatrix<f64> {
        &self.forward
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

/// Least-squares DCT coefficients explaining only the frames outside
/// `[n1, n2)`: the pseudo-inverse of the inverse basis with those rows
/// removed, applied to the channel with the same entries removed.
pub fn infer_features_without_segment(
    channel: &[f64],
    basis: &DctBasis,
    n1: usize,
    n2: usize,
) -> Result<DVector<f64>, HighlightError> {
    let l = basis.l();
    if channel.len() != l || n1 > n2 || n2 > l {
        return Err(HighlightError::BadRange {
            n1,
            n2,
            l: channel.len(),
        });
    }
    let rhs = DMatrix::from_column_slice(l, 1, channel);
    let solved = solve_without_rows(basis, n1, n2, &rhs)?;
    Ok(solved.column(0).into_owned())
}

/// Multi-channel variant: one reduced-basis SVD solve shared by every
/// column of `channels` (an L x D matrix).
fn solve_without_rows(
    basis: &DctBasis,
    n1: usize,
    n2: usize,
    channels: &DMatrix<f64>,
) -> Result<DMatrix<f64>, HighlightError> {
    let l = basis.l();
    let q = basis.q();
    let window = n2 - n1;
    let remaining = l - window;
    if remaining < q {
        return Err(HighlightError::WindowTooLarge {
            window,
            remaining,
            q,
            max_window: l - q,
        });
    }
    let kept: Vec<usize> = (0..n1).chain(n2..l).collect();
    let mut reduced = DMatrix::<f64>::zeros(remaining, q);
    let mut rhs = DMatrix::<f64>::zeros(remaining, channels.ncols());
    for (row, &src) in kept.iter().enumerate() {
        reduced.row_mut(row).copy_from(&basis.inverse.row(src));
        rhs.row_mut(row).copy_from(&channels.row(src));
    }
    let svd = reduced.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    // pseudo-inverse truncation: deleting a window can leave the reduced
    // basis numerically rank-deficient (band-limited extrapolation), and
    // untruncated near-null directions would blow up the inferred
    // coefficients
    let eps = max_sv * 1e-10;
    Ok(svd.solve(&rhs, eps).expect("svd computed with u and v_t"))
}

/// Per-window impact values for one trial and criterion.
#[derive(Debug, Clone, Serialize)]
pub struct ImpactCurve {
    pub window_length: usize,
    pub stride: usize,
    pub positions: Vec<usize>,
    pub impacts: Vec<f64>,
    pub baseline_score: f64,
    pub ground_truth: f64,
    pub criterion: ScoreTarget,
    pub gesture_overlay: Option<Vec<Option<GestureId>>>,
}

/// Slides a deletion window across the trial: baseline `psi` is the SVR
/// prediction on the full DCT features; at each position every channel's
/// q-block is replaced by its inferred coefficients and the impact is
/// `psi - psi_hat`.
pub fn impact_curve(
    trial: &TrialRecord,
    pipeline: &TrainedPipeline,
    criterion: ScoreTarget,
    window_length: usize,
    stride: usize,
) -> Result<ImpactCurve, HighlightError> {
    let FamilyParams::Dct { q } = pipeline.family_params else {
        return Err(HighlightError::PipelineFamilyMismatch(pipeline.family()));
    };
    if pipeline.criterion != criterion {
        return Err(HighlightError::CriterionMismatch {
            expected: pipeline.criterion,
            got: criterion,
        });
    }
    if stride == 0 {
        return Err(HighlightError::BadParam("stride must be >= 1".into()));
    }
    let l = trial.series.n_frames();
    if window_length > l || l - window_length < q {
        return Err(HighlightError::WindowTooLarge {
            window: window_length,
            remaining: l.saturating_sub(window_length),
            q,
            max_window: l.saturating_sub(q),
        });
    }

    let basis = DctBasis::new(l, q)?;
    let d = trial.series.n_channels();
    let full = dct_features(&trial.series, q).map_err(PipelineError::from)?;
    let baseline_score = pipeline.predict_features(&full.values)?;

    let mut channels = DMatrix::<f64>::zeros(l, d);
    for ch in 0..d {
        for (row, v) in trial.series.channel(ch).iter().enumerate() {
            channels[(row, ch)] = *v;
        }
    }

    let positions: Vec<usize> = (0..=l - window_length).step_by(stride).collect();
    let impacts: Result<Vec<f64>, HighlightError> = positions
        .par_iter()
        .map(|&pos| {
            let inferred = solve_without_rows(&basis, pos, pos + window_length, &channels)?;
            let mut phi = Vec::with_capacity(d * q);
            for ch in 0..d {
                phi.extend(inferred.column(ch).iter());
            }
            let psi_hat = pipeline.predict_features(&phi)?;
            Ok(baseline_score - psi_hat)
        })
        .collect();

    Ok(ImpactCurve {
        window_length,
        stride,
        positions,
        impacts: impacts?,
        baseline_score,
        ground_truth: trial.labels.score(criterion),
        criterion,
        gesture_overlay: None,
    })
}

/// Labels each window position with the gesture covering the most frames
/// of the window. Gesture ties go to the smaller gesture id; uncovered
/// frames count as no-gesture and win only with a strictly larger share.
pub fn attach_gesture_overlay(
    mut curve: ImpactCurve,
    transcript: &[GestureSegment],
) -> ImpactCurve {
    let overlay = curve
        .positions
        .iter()
        .map(|&pos| {
            let start = pos;
            let end = pos + curve.window_length;
            let mut counts: Vec<(GestureId, usize)> = Vec::new();
            let mut covered = 0usize;
            for seg in transcript {
                let lo = seg.start_frame.max(start);
                let hi = seg.end_frame.min(end);
                if hi > lo {
                    let overlap = hi - lo;
                    covered += overlap;
                    match counts.iter_mut().find(|(g, _)| *g == seg.gesture) {
                        Some((_, c)) => *c += overlap,
                        None => counts.push((seg.gesture, overlap)),
                    }
                }
            }
            let none_count = (end - start) - covered;
            counts.sort_by_key(|(g, c)| (std::cmp::Reverse(*c), *g));
            match counts.first() {
                Some(&(g, c)) if c >= none_count && c > 0 => Some(g),
                _ => None,
            }
        })
        .collect();
    curve.gesture_overlay = Some(overlay);
    curve
}

impl ImpactCurve {
    /// `position,impact,gesture` rows; the gesture column is empty when
    /// no overlay is attached or no gesture covers the window.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,impact,gesture\n");
        for (i, pos) in self.positions.iter().enumerate() {
            let gesture = self
                .gesture_overlay
                .as_ref()
                .and_then(|ov| ov[i].map(|g| g.to_string()))
                .unwrap_or_default();
            out.push_str(&format!("{pos},{:.12e},{gesture}\n", self.impacts[i]));
        }
        out
    }

    /// JSON document with the baseline score, criterion, ground truth,
    /// and window parameters alongside the curve itself.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable curve")
    }
}
