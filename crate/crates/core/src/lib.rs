//! Single-channel speech dereverberation with a fully convolutional U-Net.
//!
//! Reverberant speech is turned into normalized log-magnitude spectrogram
//! images, mapped to clean-speech images by a U-Net (optionally refined with
//! conditional adversarial training), and resynthesized with the reverberant
//! phase. The crate carries everything needed to do that at desk scale: a
//! small reverse-mode autodiff engine, STFT analysis/synthesis, synthetic
//! reverberant corpora, objective speech-quality metrics and a CLI.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod rng;
pub mod signal;
pub mod tensor;
pub mod unet;

pub use error::{Error, Result};
