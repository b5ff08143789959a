//! Frequency features: orthonormal DCT-II and DFT magnitude spectra,
//! truncated to the lowest coefficients per channel.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{tag, FeatureError, FeatureFamily, FeatureVector};
use crate::data::KinematicSeries;

/// Full-length orthonormal DCT-II of `signal`:
/// `X_k = c_k * sqrt(2/L) * sum_n s_n cos(pi (2n+1) k / (2L))`, `c_0 = 1/sqrt(2)`.
///
/// Computed through a length-L complex FFT on the even/odd reordered
/// signal; the direct summation is the test oracle.
pub fn dct_ortho(signal: &[f64]) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(signal.len());
    dct_ortho_with(signal, &fft)
}

fn dct_ortho_with(signal: &[f64], fft: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    let l = signal.len();
    debug_assert_eq!(fft.len(), l);
    // Even-indexed samples ascending, then odd-indexed descending.
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(l);
    for n in (0..l).step_by(2) {
        buf.push(Complex::new(signal[n], 0.0));
    }
    for n in (1..l).step_by(2).rev() {
        buf.push(Complex::new(signal[n], 0.0));
    }
    fft.process(&mut buf);

    let scale0 = 1.0 / (l as f64).sqrt();
    let scale = (2.0 / l as f64).sqrt();
    (0..l)
        .map(|k| {
            let angle = -std::f64::consts::PI * k as f64 / (2.0 * l as f64);
            let twiddle = Complex::new(angle.cos(), angle.sin());
            let t = (twiddle * buf[k]).re;
            if k == 0 {
                t * scale0
            } else {
                t * scale
            }
        })
        .collect()
}

/// Magnitudes of the `q` lowest non-negative-frequency DFT bins.
pub fn dft_magnitudes(signal: &[f64], q: usize) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(signal.len());
    dft_magnitudes_with(signal, q, &fft)
}

fn dft_magnitudes_with(signal: &[f64], q: usize, fft: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf[..q].iter().map(|c| c.norm()).collect()
}

/// The `q` lowest orthonormal DCT-II coefficients of every channel,
/// concatenated in channel order (length `D * q`).
pub fn dct_features(series: &KinematicSeries, q: usize) -> Result<FeatureVector, FeatureError> {
    let l = series.n_frames();
    if q < 1 || q > l {
        return Err(FeatureError::BadParam(format!(
            "DCT q={q} outside [1, {l}]"
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(l);
    let mut values = Vec::with_capacity(series.n_channels() * q);
    for d in 0..series.n_channels() {
        let coeffs = dct_ortho_with(series.channel(d), &fft);
        values.extend_from_slice(&coeffs[..q]);
    }
    Ok(tag(
        FeatureFamily::Dct,
        values,
        super::fnv1a_str(&format!("DCT q={q}")),
    ))
}

/// The magnitudes of the `q` lowest DFT bins of every channel,
/// concatenated in channel order (length `D * q`).
pub fn dft_features(series: &KinematicSeries, q: usize) -> Result<FeatureVector, FeatureError> {
    let l = series.n_frames();
    let q_max = l / 2 + 1;
    if q < 1 || q > q_max {
        return Err(FeatureError::BadParam(format!(
            "DFT q={q} outside [1, {q_max}]"
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(l);
    let mut values = Vec::with_capacity(series.n_channels() * q);
    for d in 0..series.n_channels() {
        values.extend(dft_magnitudes_with(series.channel(d), q, &fft));
    }
    Ok(tag(
        FeatureFamily::Dft,
        values,
        super::fnv1a_str(&format!("DFT q={q}")),
    ))
}
