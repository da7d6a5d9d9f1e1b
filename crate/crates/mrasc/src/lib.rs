//! Multi-resolution acoustic scene classification.
//!
//! This crate implements a complete desk-scale pipeline for classifying
//! acoustic scenes from audio:
//!
//! - WAV ingestion, manifest handling and grouped-stratified fold
//!   construction ([`corpus`])
//! - STFT / Mel-spectrogram front-end with aligned segment extraction at
//!   five temporal resolutions ([`dsp`])
//! - time- and spectrogram-domain data augmentation ([`augment`])
//! - a minimal differentiable layer engine with Nadam and finite-difference
//!   gradient verification ([`nn`])
//! - the parallel two-path CNN stack and the multi-resolution fusion model
//!   with resolution dropout ([`model`])
//! - the training loop, learning-rate plateau schedule and raw/grouped
//!   evaluation ([`train`])
//! - a deterministic synthetic scene corpus generator for end-to-end
//!   verification ([`synth`])
//!
//! The `mrasc` binary in the companion CLI crate binds these into
//! reproducible `synth` / `extract` / `train` / `eval` / `report` runs.
//! The mdbook under `book/` walks through every stage with runnable
//! examples; its code blocks are compiled as doctests of this crate.

pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;
pub mod util;

pub use corpus::{AudioClip, FoldPlan, RecordingMeta};
pub use dsp::{MelSegment, ResolutionProfile};

#[cfg(doctest)]
mod book;
