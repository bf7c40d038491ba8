//! Audio I/O and the spectrogram-image representation the network sees.

mod logspec;
mod pgm;
mod stft;
mod wav;

pub use logspec::{
    from_logspec, logspec_magnitudes, spectrogram_from_images, to_logspec, NormSpec, PhaseSidecar, SpecImage, TileSpec,
    LOG_FLOOR, NORM_RANGE_DB,
};
pub use pgm::{pgm_bytes, spectrogram_pgm, write_pgm};
pub use stft::{
    frame_count, hamming_periodic, istft, reference_dft, stft, ComplexSpectrogram, FRAME_LEN, HOP, KEPT_BINS, N_BINS,
};
pub use wav::{read_wav, read_wav_bytes, wav_bytes, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono signal with samples nominally in `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    /// Scale down so that the peak does not exceed `limit`; quieter signals are untouched.
    pub fn limit_peak(&mut self, limit: f64) {
        let peak = self.peak();
        if peak > limit {
            let g = limit / peak;
            self.samples.iter_mut().for_each(|v| *v *= g);
        }
    }
}

/// `10·log10(Σ ref² / Σ (ref − est)²)` over `range`.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    let noise: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (signal / noise.max(1e-300)).log10()
}
