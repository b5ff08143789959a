//! Approximate entropy (ApEn), a regularity statistic: the log-likelihood
//! drop when extending matched m-length embeddings to m+1. Self-matches
//! are included and the natural log is used, so no count is ever zero.

use super::{ApEnParams, FeatureError, FeatureFamily, FeatureVector, RadiusMode};
use crate::data::KinematicSeries;

/// Population (ddof = 0) standard deviation.
pub fn population_std(signal: &[f64]) -> f64 {
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let var = signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// For every m-length embedded vector, the number of embedded vectors
/// (self included) within max-norm distance `r_eff`.
pub fn neighbor_counts(signal: &[f64], m: usize, tau: usize, r_eff: f64) -> Vec<usize> {
    let n_vec = signal.len().saturating_sub((m - 1) * tau);
    let mut counts = vec![1usize; n_vec]; // self-match
    for i in 0..n_vec {
        for j in (i + 1)..n_vec {
            if embed_dist(signal, i, j, m, tau) <= r_eff {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    counts
}

#[inline]
fn embed_dist(signal: &[f64], i: usize, j: usize, m: usize, tau: usize) -> f64 {
    let mut d = 0.0f64;
    for l in 0..m {
        d = d.max((signal[i + l * tau] - signal[j + l * tau]).abs());
    }
    d
}

/// Per-radius neighbor counts for the m- and (m+1)-length embeddings,
/// computed in a single pair sweep. `r_effs` must be non-decreasing; each
/// pair contributes to every radius index with `dist <= r_effs[idx]`, the
/// same comparison the one-radius double loop makes.
fn counts_for_radii(
    signal: &[f64],
    m: usize,
    tau: usize,
    r_effs: &[f64],
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = signal.len();
    let nr = r_effs.len();
    let n_vec_m = n - (m - 1) * tau;
    let n_vec_m1 = n - m * tau;
    let mut counts_m = vec![vec![1usize; n_vec_m]; nr];
    let mut counts_m1 = vec![vec![1usize; n_vec_m1]; nr];
    for i in 0..n_vec_m {
        for j in (i + 1)..n_vec_m {
            let d_m = embed_dist(signal, i, j, m, tau);
            if let Some(first) = first_radius_at_or_above(r_effs, d_m) {
                for counts in counts_m.iter_mut().skip(first) {
                    counts[i] += 1;
                    counts[j] += 1;
                }
            }
            if j < n_vec_m1 {
                let d_m1 = d_m.max((signal[i + m * tau] - signal[j + m * tau]).abs());
                if let Some(first) = first_radius_at_or_above(r_effs, d_m1) {
                    for counts in counts_m1.iter_mut().skip(first) {
                        counts[i] += 1;
                        counts[j] += 1;
                    }
                }
            }
        }
    }
    (counts_m, counts_m1)
}

#[inline]
fn first_radius_at_or_above(r_effs: &[f64], d: f64) -> Option<usize> {
    r_effs.iter().position(|r| d <= *r)
}

/// `phi^m`: mean log of the count fractions.
fn phi(counts: &[usize]) -> f64 {
    let n_vec = counts.len() as f64;
    let mut acc = 0.0;
    for &c in counts {
        acc += (c as f64 / n_vec).ln();
    }
    acc / n_vec
}

fn apen_from_counts(counts_m: &[usize], counts_m1: &[usize]) -> f64 {
    phi(counts_m) - phi(counts_m1)
}

fn check_length(signal: &[f64], params: &ApEnParams) -> Result<(), FeatureError> {
    let needed = params.m * params.tau + 2;
    if signal.len() < needed {
        return Err(FeatureError::SignalTooShort {
            channel: 0,
            needed,
            got: signal.len(),
        });
    }
    Ok(())
}

fn effective_radii(signal: &[f64], params: &ApEnParams) -> Option<Vec<f64>> {
    match params.radius_mode {
        RadiusMode::Absolute => Some(params.radii.clone()),
        RadiusMode::StdScaled => {
            let std = population_std(signal);
            if std == 0.0 {
                None // constant signal: perfectly predictable by convention
            } else {
                Some(params.radii.iter().map(|r| r * std).collect())
            }
        }
    }
}

/// ApEn of one signal at `params.radii[radius_index]`.
///
/// A zero-variance signal returns exactly 0.
pub fn apen(
    signal: &[f64],
    params: &ApEnParams,
    radius_index: usize,
) -> Result<f64, FeatureError> {
    params.validate()?;
    if radius_index >= params.radii.len() {
        return Err(FeatureError::BadParam(format!(
            "radius index {radius_index} outside the {}-radius grid",
            params.radii.len()
        )));
    }
    check_length(signal, params)?;
    let Some(r_effs) = effective_radii(signal, params) else {
        return Ok(0.0);
    };
    let grid = [r_effs[radius_index]];
    let (counts_m, counts_m1) = counts_for_radii(signal, params.m, params.tau, &grid);
    Ok(apen_from_counts(&counts_m[0], &counts_m1[0]))
}

/// One ApEn value per channel x radius, channel-major (length `D * R`).
pub fn apen_features(
    series: &KinematicSeries,
    params: &ApEnParams,
) -> Result<FeatureVector, FeatureError> {
    params.validate()?;
    let mut values = Vec::with_capacity(series.n_channels() * params.radii.len());
    for d in 0..series.n_channels() {
        let signal = series.channel(d);
        check_length(signal, params).map_err(|e| match e {
            FeatureError::SignalTooShort { needed, got, .. } => FeatureError::SignalTooShort {
                channel: d,
                needed,
                got,
            },
            other => other,
        })?;
        match effective_radii(signal, params) {
            None => values.extend(std::iter::repeat(0.0).take(params.radii.len())),
            Some(r_effs) => {
                let (counts_m, counts_m1) =
                    counts_for_radii(signal, params.m, params.tau, &r_effs);
                for r in 0..params.radii.len() {
                    values.push(apen_from_counts(&counts_m[r], &counts_m1[r]));
                }
            }
        }
    }
    Ok(super::tag(
        FeatureFamily::ApEn,
        values,
        super::fnv1a_str(&format!("ApEn {params:?}")),
    ))
}
