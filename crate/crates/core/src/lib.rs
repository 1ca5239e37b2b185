//! # evipitch
//!
//! Frame-wise melody (fundamental frequency) estimation with evidential
//! uncertainty disentanglement and active-learning domain adaptation.
//!
//! The crate covers the full pipeline:
//!
//! - [`pitchgrid`] — the logarithmic pitch lattice and Hz/cents/bin conversions
//! - [`dsp`] — WAV ingestion, resampling, segmentation, log-magnitude STFT
//! - [`dataio`] — labeled corpora, label alignment, synthetic clip generation
//! - [`evidential`] — Dirichlet and Normal-Inverse-Gamma heads, uncertainty
//!   decompositions, training objectives with analytic gradients
//! - [`network`] — a small residual convolutional model with reverse-mode
//!   differentiation, Adam, and checkpointing
//! - [`metrics`] — RPA / RCA / OA evaluation
//! - [`active`] — uncertainty-driven sample scoring, selection, fine-tuning,
//!   and adaptation curves
//!
//! Data-parallel inner loops (batch featurization, batch forward/backward,
//! pool scoring) run on rayon when the default `parallel` feature is enabled
//! and fall back to sequential execution without it. Both paths reduce in a
//! fixed order, so results are bit-identical either way.

pub mod active;
pub mod dataio;
pub mod dsp;
pub mod error;
pub mod evidential;
pub mod metrics;
pub mod network;
pub mod pitchgrid;

pub(crate) mod par;

pub use error::{Error, Result};
pub use pitchgrid::{FrameTarget, PitchGrid, TargetMode};
