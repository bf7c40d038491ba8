use super::model::UNetModel;
use crate::dataset::auto_norm;
use crate::error::{Error, Result};
use crate::signal::{from_logspec, stft, to_logspec, TileSpec, Waveform, SAMPLE_RATE};

/// STFT → normalized images → eval-mode U-Net per image → resynthesis with the
/// reverberant phase. The result has the input's length and peak ≤ 1. A model
/// without stored normalization falls back to one derived from `w` itself.
pub fn enhance_utterance(model: &UNetModel, w: &Waveform) -> Result<Waveform> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Parameter(format!(
            "enhancement expects {SAMPLE_RATE} Hz audio, got {} Hz",
            w.sample_rate
        )));
    }
    if w.is_empty() {
        return Ok(w.clone());
    }
    let (h, width) = model.config().input_size;
    let tile = TileSpec::new(h, width)?;
    let norm = model.norm().unwrap_or_else(|| auto_norm([w]));
    let (images, sidecar) = to_logspec(&stft(w), norm, tile)?;
    let mut enhanced = Vec::with_capacity(images.len());
    for img in images.chunks(1) {
        enhanced.extend(model.forward_images(img)?);
    }
    let mut out = from_logspec(&enhanced, &sidecar)?;
    out.limit_peak(1.0);
    Ok(out)
}
