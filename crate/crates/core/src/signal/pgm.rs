//! Binary graymap (P5) export of log-spectrograms for visual inspection.

use std::path::Path;

use super::logspec::{logspec_magnitudes, NormSpec};
use super::stft::{stft, KEPT_BINS};
use super::Waveform;
use crate::error::{Error, Result};

/// Encode `[−1, 1]` values (row-major, `height × width`) as an 8-bit P5 image.
pub fn pgm_bytes(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (255.0 * (v.clamp(-1.0, 1.0) + 1.0) / 2.0).round() as u8),
    );
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::Dimension(format!(
            "{} pixel values for a {width}x{height} image",
            values.len()
        )));
    }
    std::fs::write(path, pgm_bytes(width, height, values)).map_err(|e| Error::io(path, e))
}

/// Whole-utterance log-spectrogram as P5 bytes, low frequencies at the bottom.
/// Without explicit bounds the ceiling is the loudest bin of this signal.
pub fn spectrogram_pgm(w: &Waveform, norm: Option<NormSpec>) -> Vec<u8> {
    let s = stft(w);
    let db = logspec_magnitudes(&s);
    let norm = norm.unwrap_or_else(|| NormSpec::from_ceiling(db.iter().copied().fold(f64::MIN, f64::max)));
    let t = s.n_frames;
    let mut values = Vec::with_capacity(KEPT_BINS * t);
    for row in 0..KEPT_BINS {
        let bin = KEPT_BINS - 1 - row;
        values.extend(db[bin * t..(bin + 1) * t].iter().map(|&d| norm.to_unit(d)));
    }
    pgm_bytes(t, KEPT_BINS, &values)
}
