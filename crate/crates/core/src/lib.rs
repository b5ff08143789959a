//! Skill scoring for robot kinematic time series.
//!
//! The pipeline ingests multi-channel trial recordings, extracts holistic
//! features (sequential motion texture, DCT/DFT spectra, approximate
//! entropy), reduces them with PCA, and predicts skill classes and
//! modified-OSATS/GRS scores with a nearest-neighbor classifier and linear
//! support vector regression. Per-family score predictions can be fused
//! with least-squares weights, and per-segment impact curves ("task
//! highlights") are derived by re-inferring DCT features with a sliding
//! window deleted.

pub mod data;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod highlights;
pub mod models;
pub mod pipeline;
pub mod reduce;
