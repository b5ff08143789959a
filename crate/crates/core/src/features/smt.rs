//! Sequential motion texture: per window, a linear frame kernel matrix
//! over within-window standardized channels, quantized to gray levels,
//! summarized by GLCM statistics at four unit offsets.

use nalgebra::DMatrix;

use super::{tag, FeatureError, FeatureFamily, FeatureVector, SmtParams};
use crate::data::KinematicSeries;

/// Linear frame kernel of one window: channels are standardized to zero
/// mean / unit variance within the window (zero-variance channels become
/// zero rows), then `K = Z^T Z / D` over the standardized frames.
pub fn frame_kernel(window: &[&[f64]]) -> DMatrix<f64> {
    let d = window.len();
    let w = window[0].len();
    let mut z = DMatrix::<f64>::zeros(d, w);
    for (row, ch) in window.iter().enumerate() {
        let mean = ch.iter().sum::<f64>() / w as f64;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
        let std = var.sqrt();
        if std > 0.0 {
            for (col, v) in ch.iter().enumerate() {
                z[(row, col)] = (v - mean) / std;
            }
        }
    }
    let mut kernel = z.transpose() * &z;
    kernel /= d as f64;
    kernel
}

/// Uniformly quantizes kernel entries into `levels` bins spanning
/// `[min, max]`; a flat kernel maps everything to bin 0.
pub fn quantize_kernel(kernel: &DMatrix<f64>, levels: usize) -> DMatrix<usize> {
    let min = kernel.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = kernel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    kernel.map(|v| {
        if span == 0.0 {
            0
        } else {
            (((v - min) / span * levels as f64).floor() as usize).min(levels - 1)
        }
    })
}

/// Symmetric, normalized gray-level co-occurrence matrix of `image` at
/// displacement `offset = (row, col)`. Every matrix sums to 1.
pub fn symmetric_glcm(image: &DMatrix<usize>, offset: (i32, i32), levels: usize) -> DMatrix<f64> {
    let (rows, cols) = image.shape();
    let mut counts = DMatrix::<f64>::zeros(levels, levels);
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let ni = i as i64 + offset.0 as i64;
            let nj = j as i64 + offset.1 as i64;
            if ni < 0 || nj < 0 || ni >= rows as i64 || nj >= cols as i64 {
                continue;
            }
            let a = image[(i, j)];
            let b = image[(ni as usize, nj as usize)];
            counts[(a, b)] += 1.0;
            counts[(b, a)] += 1.0;
            total += 2.0;
        }
    }
    if total > 0.0 {
        counts /= total;
    }
    counts
}

/// The five texture statistics of a normalized GLCM, in
/// [`super::GLCM_STAT_NAMES`] order: contrast, correlation, energy,
/// homogeneity, entropy. Correlation is 0 when either marginal variance
/// is 0.
pub fn glcm_stats(glcm: &DMatrix<f64>) -> [f64; 5] {
    let g = glcm.nrows();
    let mut contrast = 0.0;
    let mut energy = 0.0;
    let mut homogeneity = 0.0;
    let mut entropy = 0.0;
    let mut mean_i = 0.0;
    let mut mean_j = 0.0;
    for i in 0..g {
        for j in 0..g {
            let p = glcm[(i, j)];
            let diff = i as f64 - j as f64;
            contrast += diff * diff * p;
            energy += p * p;
            homogeneity += p / (1.0 + diff * diff);
            if p > 0.0 {
                entropy -= p * p.ln();
            }
            mean_i += i as f64 * p;
            mean_j += j as f64 * p;
        }
    }
    let mut var_i = 0.0;
    let mut var_j = 0.0;
    let mut cov = 0.0;
    for i in 0..g {
        for j in 0..g {
            let p = glcm[(i, j)];
            var_i += (i as f64 - mean_i) * (i as f64 - mean_i) * p;
            var_j += (j as f64 - mean_j) * (j as f64 - mean_j) * p;
            cov += (i as f64 - mean_i) * (j as f64 - mean_j) * p;
        }
    }
    let correlation = if var_i == 0.0 || var_j == 0.0 {
        0.0
    } else {
        cov / (var_i.sqrt() * var_j.sqrt())
    };
    [contrast, correlation, energy, homogeneity, entropy]
}

/// Contiguous near-equal windows; remainder frames go to the last window.
fn window_bounds(l: usize, n_windows: usize) -> Vec<(usize, usize)> {
    let base = l / n_windows;
    (0..n_windows)
        .map(|w| {
            let start = w * base;
            let end = if w + 1 == n_windows { l } else { start + base };
            (start, end)
        })
        .collect()
}

/// Sequential-motion-texture features: `per_window()` statistics for each
/// of the `n_windows` windows, concatenated in window order.
pub fn smt_features(
    series: &KinematicSeries,
    params: &SmtParams,
) -> Result<FeatureVector, FeatureError> {
    params.validate()?;
    let l = series.n_frames();
    if l < 2 * params.n_windows {
        return Err(FeatureError::TooFewFrames {
            n_windows: params.n_windows,
            needed: 2 * params.n_windows,
            got: l,
        });
    }
    let mut values = Vec::with_capacity(params.n_windows * params.per_window());
    for (start, end) in window_bounds(l, params.n_windows) {
        let window: Vec<&[f64]> = (0..series.n_channels())
            .map(|d| &series.channel(d)[start..end])
            .collect();
        let kernel = frame_kernel(&window);
        let image = quantize_kernel(&kernel, params.gray_levels);
        for offset in params.offsets {
            let glcm = symmetric_glcm(&image, offset, params.gray_levels);
            values.extend_from_slice(&glcm_stats(&glcm));
        }
    }
    debug_assert_eq!(values.len(), params.n_windows * params.per_window());
    Ok(tag(
        FeatureFamily::Smt,
        values,
        super::fnv1a_str(&format!("SMT {params:?}")),
    ))
}
