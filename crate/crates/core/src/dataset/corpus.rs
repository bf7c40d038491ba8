use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use sha2::{Digest, Sha256};

use super::rir::{make_reverberant, synth_rir, RirSpec, DEFAULT_TAIL_GAIN};
use super::source::synth_clean_source;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::{
    logspec_magnitudes, read_wav, stft, to_logspec, write_wav, NormSpec, PhaseSidecar, SpecImage, TileSpec, Waveform,
    SAMPLE_RATE,
};

const MANIFEST_HEADER: &str = "utt_id\tseed\tt60\tsnr_db\tsamples";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub n_utts: usize,
    /// Each utterance draws its t60 uniformly from `[lo, hi]`.
    pub t60_range: (f64, f64),
    /// `f64::INFINITY` for noiseless mixtures.
    pub snr_db: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub tile: TileSpec,
    /// `None` derives the ceiling from the loudest bin in the corpus.
    pub norm: Option<NormSpec>,
    pub sample_rate: u32,
    pub tail_gain: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_utts: 8,
            t60_range: (0.2, 0.8),
            snr_db: 20.0,
            duration_s: 2.0,
            seed: 0,
            tile: TileSpec::default(),
            norm: None,
            sample_rate: SAMPLE_RATE,
            tail_gain: DEFAULT_TAIL_GAIN,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.t60_range;
        if self.n_utts == 0 {
            return Err(Error::Parameter("n_utts must be at least 1".into()));
        }
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Parameter(format!(
                "t60 range must satisfy 0 < lo <= hi, got {lo}..{hi}"
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Parameter(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Parameter("snr_db is NaN".into()));
        }
        TileSpec::new(self.tile.height, self.tile.width)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceMeta {
    pub id: String,
    pub seed: u64,
    pub t60: f64,
    pub snr_db: f64,
    pub samples: usize,
}

/// A clean/reverberant pair together with the network-side images. The
/// sidecar belongs to the reverberant signal, whose phase is reused when an
/// enhanced magnitude is resynthesized.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedExample {
    pub meta: UtteranceMeta,
    pub clean: Waveform,
    pub reverberant: Waveform,
    pub clean_images: Vec<SpecImage>,
    pub reverb_images: Vec<SpecImage>,
    pub sidecar: PhaseSidecar,
}

/// Ceiling at the loudest kept bin of any waveform, 80 dB of range below it.
pub fn auto_norm<'a>(waves: impl IntoIterator<Item = &'a Waveform>) -> NormSpec {
    let hi = waves
        .into_iter()
        .flat_map(|w| logspec_magnitudes(&stft(w)))
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi.is_finite() {
        hi
    } else {
        20.0 * crate::signal::LOG_FLOOR.log10()
    };
    NormSpec::from_ceiling(hi)
}

pub fn pair_from_waveforms(
    meta: UtteranceMeta,
    clean: Waveform,
    reverberant: Waveform,
    norm: NormSpec,
    tile: TileSpec,
) -> Result<PairedExample> {
    if clean.len() != reverberant.len() {
        return Err(Error::Dimension(format!(
            "{}: clean has {} samples, reverberant {}",
            meta.id,
            clean.len(),
            reverberant.len()
        )));
    }
    let (clean_images, _) = to_logspec(&stft(&clean), norm, tile)?;
    let (reverb_images, sidecar) = to_logspec(&stft(&reverberant), norm, tile)?;
    Ok(PairedExample {
        meta,
        clean,
        reverberant,
        clean_images,
        reverb_images,
        sidecar,
    })
}

/// Synthesize the corpus. Utterance `i` is a pure function of `(seed, i)`:
/// its source, RIR, noise and t60 come from separate derived streams.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<(Vec<PairedExample>, NormSpec)> {
    cfg.validate()?;
    let mut waves = Vec::with_capacity(cfg.n_utts);
    for i in 0..cfg.n_utts {
        let utt_seed = derive_seed(cfg.seed, i as u64);
        let (lo, hi) = cfg.t60_range;
        let t60 = if hi > lo {
            rng_from_seed(derive_seed(utt_seed, 4)).random_range(lo..=hi)
        } else {
            lo
        };
        let clean = synth_clean_source(cfg.duration_s, derive_seed(utt_seed, 1), cfg.sample_rate)?;
        let mut rir_spec = RirSpec::new(t60, derive_seed(utt_seed, 2), cfg.sample_rate);
        rir_spec.tail_gain = cfg.tail_gain;
        let rir = synth_rir(&rir_spec, cfg.sample_rate)?;
        let reverberant = make_reverberant(&clean, &rir, cfg.snr_db, derive_seed(utt_seed, 3))?;
        let meta = UtteranceMeta {
            id: format!("utt{i:04}"),
            seed: utt_seed,
            t60,
            snr_db: cfg.snr_db,
            samples: clean.len(),
        };
        waves.push((meta, clean, reverberant));
    }
    let norm = match cfg.norm {
        Some(n) => NormSpec::new(n.lo_db, n.hi_db)?,
        None => auto_norm(waves.iter().flat_map(|(_, c, r)| [c, r])),
    };
    let examples = waves
        .into_iter()
        .map(|(m, c, r)| pair_from_waveforms(m, c, r, norm, cfg.tile))
        .collect::<Result<Vec<_>>>()?;
    Ok((examples, norm))
}

pub fn manifest_tsv(examples: &[PairedExample]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    for e in examples {
        let m = &e.meta;
        let _ = writeln!(s, "{}\t{}\t{:.6}\t{}\t{}", m.id, m.seed, m.t60, m.snr_db, m.samples);
    }
    s
}

/// SHA-256 over the manifest and every sample, as lowercase hex.
pub fn content_hash(examples: &[PairedExample]) -> String {
    let mut h = Sha256::new();
    h.update(manifest_tsv(examples).as_bytes());
    for e in examples {
        for v in e.clean.samples.iter().chain(&e.reverberant.samples) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// `clean/<id>.wav`, `reverb/<id>.wav`, `manifest.tsv` and `norm.txt` under `dir`.
pub fn write_dataset(dir: &Path, examples: &[PairedExample], norm: NormSpec) -> Result<()> {
    let (clean_dir, reverb_dir) = (dir.join("clean"), dir.join("reverb"));
    create_dir(&clean_dir)?;
    create_dir(&reverb_dir)?;
    for e in examples {
        write_wav(&clean_dir.join(format!("{}.wav", e.meta.id)), &e.clean)?;
        write_wav(&reverb_dir.join(format!("{}.wav", e.meta.id)), &e.reverberant)?;
    }
    let manifest = dir.join("manifest.tsv");
    std::fs::write(&manifest, manifest_tsv(examples)).map_err(|e| Error::io(&manifest, e))?;
    let norm_path = dir.join("norm.txt");
    let text = format!("norm_lo={}\nnorm_hi={}\n", norm.lo_db, norm.hi_db);
    std::fs::write(&norm_path, text).map_err(|e| Error::io(&norm_path, e))
}

/// Parse a `norm.txt` written by [`write_dataset`].
pub fn read_norm_file(path: &Path) -> Result<NormSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("{} not found", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    let (mut lo, mut hi) = (None, None);
    let mut offset = 0u64;
    for line in text.lines() {
        let bad = || Error::format(offset, format!("bad norm line: {line}"));
        if let Some((k, v)) = line.split_once('=') {
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "norm_lo" => lo = Some(v),
                "norm_hi" => hi = Some(v),
                _ => return Err(bad()),
            }
        } else if !line.trim().is_empty() {
            return Err(bad());
        }
        offset += line.len() as u64 + 1;
    }
    match (lo, hi) {
        (Some(lo), Some(hi)) => NormSpec::new(lo, hi),
        _ => Err(Error::format(offset, "norm.txt needs norm_lo and norm_hi")),
    }
}

fn parse_manifest(text: &str) -> Result<Vec<UtteranceMeta>> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::format(0, "manifest header mismatch"));
    }
    let mut offset = MANIFEST_HEADER.len() as u64 + 1;
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let bad = || Error::format(offset, format!("bad manifest row: {line}"));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        out.push(UtteranceMeta {
            id: f[0].to_string(),
            seed: f[1].parse().map_err(|_| bad())?,
            t60: f[2].parse().map_err(|_| bad())?,
            snr_db: f[3].parse().map_err(|_| bad())?,
            samples: f[4].parse().map_err(|_| bad())?,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

/// Load a directory laid out by [`write_dataset`]. Without a manifest, every
/// `clean/*.wav` with a same-named `reverb/*.wav` is paired. The normalization
/// is `norm` if given, else `norm.txt`, else derived from the audio.
pub fn load_dataset_dir(dir: &Path, tile: TileSpec, norm: Option<NormSpec>) -> Result<(Vec<PairedExample>, NormSpec)> {
    let (clean_dir, reverb_dir) = (dir.join("clean"), dir.join("reverb"));
    for d in [&clean_dir, &reverb_dir] {
        if !d.is_dir() {
            return Err(Error::MissingArtifact(format!("{} is not a directory", d.display())));
        }
    }
    let manifest = dir.join("manifest.tsv");
    let metas = if manifest.is_file() {
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        parse_manifest(&text)?
    } else {
        let mut ids: Vec<String> = std::fs::read_dir(&clean_dir)
            .map_err(|e| Error::io(&clean_dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "wav").then(|| p.file_stem()?.to_str().map(String::from))?
            })
            .collect();
        ids.sort();
        ids.into_iter()
            .map(|id| UtteranceMeta {
                id,
                seed: 0,
                t60: f64::NAN,
                snr_db: f64::NAN,
                samples: 0,
            })
            .collect()
    };
    if metas.is_empty() {
        return Err(Error::MissingArtifact(format!("no utterances under {}", dir.display())));
    }
    let mut waves = Vec::with_capacity(metas.len());
    for mut m in metas {
        let clean = read_wav(&clean_dir.join(format!("{}.wav", m.id)))?;
        let reverb = read_wav(&reverb_dir.join(format!("{}.wav", m.id)))?;
        m.samples = clean.len();
        waves.push((m, clean, reverb));
    }
    let norm = match norm {
        Some(n) => n,
        None if dir.join("norm.txt").is_file() => read_norm_file(&dir.join("norm.txt"))?,
        None => auto_norm(waves.iter().flat_map(|(_, c, r)| [c, r])),
    };
    let examples = waves
        .into_iter()
        .map(|(m, c, r)| pair_from_waveforms(m, c, r, norm, tile))
        .collect::<Result<Vec<_>>>()?;
    Ok((examples, norm))
}
