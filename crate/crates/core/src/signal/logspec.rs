//! Normalized log-magnitude images and their inverse.
//!
//! The 256 lowest bins of a spectrogram are converted to dB, clamped to
//! `[lo, hi]`, mapped affinely to `[−1, 1]` and cut into tiles of
//! `height × width` (frequency × frames). The default tile is 256×256, so one
//! image covers the whole kept band and 256 frames. Trailing frames are filled
//! with silence (zero magnitude, i.e. −1). Everything needed to resynthesize
//! a waveform — phase, the dropped Nyquist bin, padding — goes into the
//! [`PhaseSidecar`].

use super::stft::{istft, ComplexSpectrogram, KEPT_BINS, N_BINS};
use super::Waveform;
use crate::error::{Error, Result};

/// Floor added to magnitudes before taking the log.
pub const LOG_FLOOR: f64 = 1e-8;
/// Dynamic range kept below the normalization ceiling.
pub const NORM_RANGE_DB: f64 = 80.0;

/// dB bounds of the affine map onto `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    pub lo_db: f64,
    pub hi_db: f64,
}

impl NormSpec {
    pub fn new(lo_db: f64, hi_db: f64) -> Result<Self> {
        if !(hi_db > lo_db) || !lo_db.is_finite() || !hi_db.is_finite() {
            return Err(Error::Parameter(format!(
                "normalization bounds need lo < hi, got lo={lo_db} hi={hi_db}"
            )));
        }
        Ok(NormSpec { lo_db, hi_db })
    }

    /// Ceiling at `hi_db`, floor 80 dB below.
    pub fn from_ceiling(hi_db: f64) -> Self {
        NormSpec {
            lo_db: hi_db - NORM_RANGE_DB,
            hi_db,
        }
    }

    pub fn to_unit(&self, db: f64) -> f64 {
        let c = db.clamp(self.lo_db, self.hi_db);
        2.0 * (c - self.lo_db) / (self.hi_db - self.lo_db) - 1.0
    }

    pub fn to_db(&self, unit: f64) -> f64 {
        self.lo_db + (unit.clamp(-1.0, 1.0) + 1.0) * 0.5 * (self.hi_db - self.lo_db)
    }
}

/// Image tile geometry, frequency rows × frame columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileSpec {
    pub height: usize,
    pub width: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            height: KEPT_BINS,
            width: 256,
        }
    }
}

impl TileSpec {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || !KEPT_BINS.is_multiple_of(height) {
            return Err(Error::Parameter(format!(
                "tile {height}x{width}: height must be a positive divisor of {KEPT_BINS}"
            )));
        }
        Ok(TileSpec { height, width })
    }

    pub fn freq_tiles(&self) -> usize {
        KEPT_BINS / self.height
    }
}

/// One normalized `height × width` image, row = frequency bin, column = frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub norm: NormSpec,
    pub frame_offset: usize,
    pub bin_offset: usize,
}

impl SpecImage {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Everything [`from_logspec`] needs besides the images.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSidecar {
    /// `N_BINS × n_frames`, frequency-major.
    pub phase: Vec<f64>,
    /// Magnitude of the dropped Nyquist bin per frame.
    pub nyquist: Vec<f64>,
    pub n_frames: usize,
    /// Silent frames appended to fill the last time chunk.
    pub padding: usize,
    pub tile: TileSpec,
    pub norm: NormSpec,
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl PhaseSidecar {
    pub fn time_chunks(&self) -> usize {
        (self.n_frames + self.padding) / self.tile.width
    }

    pub fn image_count(&self) -> usize {
        self.time_chunks() * self.tile.freq_tiles()
    }
}

/// Kept-bin log magnitudes in dB, `KEPT_BINS × n_frames`.
pub fn logspec_magnitudes(s: &ComplexSpectrogram) -> Vec<f64> {
    s.magnitude[..KEPT_BINS * s.n_frames]
        .iter()
        .map(|m| 20.0 * (m + LOG_FLOOR).log10())
        .collect()
}

/// Images are ordered time chunk first, then frequency tile (lowest bins first).
pub fn to_logspec(s: &ComplexSpectrogram, norm: NormSpec, tile: TileSpec) -> Result<(Vec<SpecImage>, PhaseSidecar)> {
    let norm = NormSpec::new(norm.lo_db, norm.hi_db)?;
    let tile = TileSpec::new(tile.height, tile.width)?;
    let n_frames = s.n_frames;
    let chunks = n_frames.div_ceil(tile.width);
    let padding = chunks * tile.width - n_frames;
    let db = logspec_magnitudes(s);
    let silent = norm.to_unit(20.0 * LOG_FLOOR.log10());
    let mut images = Vec::with_capacity(chunks * tile.freq_tiles());
    for c in 0..chunks {
        for ft in 0..tile.freq_tiles() {
            let mut values = Vec::with_capacity(tile.height * tile.width);
            for r in 0..tile.height {
                let bin = ft * tile.height + r;
                for col in 0..tile.width {
                    let frame = c * tile.width + col;
                    values.push(if frame < n_frames {
                        norm.to_unit(db[bin * n_frames + frame])
                    } else {
                        silent
                    });
                }
            }
            images.push(SpecImage {
                height: tile.height,
                width: tile.width,
                values,
                norm,
                frame_offset: c * tile.width,
                bin_offset: ft * tile.height,
            });
        }
    }
    let nyquist = (0..n_frames).map(|f| s.mag(N_BINS - 1, f)).collect();
    let sidecar = PhaseSidecar {
        phase: s.phase.clone(),
        nyquist,
        n_frames,
        padding,
        tile,
        norm,
        signal_len: s.signal_len,
        sample_rate: s.sample_rate,
    };
    Ok((images, sidecar))
}

/// Undo the tiling and the normalization, attaching the sidecar phase.
pub fn spectrogram_from_images(images: &[SpecImage], sidecar: &PhaseSidecar) -> Result<ComplexSpectrogram> {
    let tile = sidecar.tile;
    if images.len() != sidecar.image_count() {
        return Err(Error::Contract(format!(
            "{} images for a layout of {} ({} chunks x {} frequency tiles)",
            images.len(),
            sidecar.image_count(),
            sidecar.time_chunks(),
            tile.freq_tiles()
        )));
    }
    if sidecar.phase.len() != N_BINS * sidecar.n_frames || sidecar.nyquist.len() != sidecar.n_frames {
        return Err(Error::Contract(
            "sidecar phase/nyquist sizes disagree with its frame count".into(),
        ));
    }
    let n_frames = sidecar.n_frames;
    let mut spec = ComplexSpectrogram::zeros(n_frames, sidecar.signal_len, sidecar.sample_rate);
    spec.phase.copy_from_slice(&sidecar.phase);
    let ft_count = tile.freq_tiles();
    for (i, img) in images.iter().enumerate() {
        if img.height != tile.height || img.width != tile.width || img.values.len() != tile.height * tile.width {
            return Err(Error::Contract(format!(
                "image {i} is {}x{}, layout expects {}x{}",
                img.height, img.width, tile.height, tile.width
            )));
        }
        let (c, ft) = (i / ft_count, i % ft_count);
        for r in 0..tile.height {
            let bin = ft * tile.height + r;
            for col in 0..tile.width {
                let frame = c * tile.width + col;
                if frame >= n_frames {
                    break;
                }
                let db = sidecar.norm.to_db(img.values[r * tile.width + col]);
                spec.magnitude[bin * n_frames + frame] = (10f64.powf(db / 20.0) - LOG_FLOOR).max(0.0);
            }
        }
    }
    for f in 0..n_frames {
        spec.magnitude[(N_BINS - 1) * n_frames + f] = sidecar.nyquist[f];
    }
    Ok(spec)
}

/// Resynthesize a waveform of the original length from (possibly enhanced) images.
pub fn from_logspec(images: &[SpecImage], sidecar: &PhaseSidecar) -> Result<Waveform> {
    Ok(istft(&spectrogram_from_images(images, sidecar)?))
}
