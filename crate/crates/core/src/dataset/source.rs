use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::signal::Waveform;

const MAX_HARMONIC_HZ: f64 = 7000.0;
const PEAK: f64 = 0.9;
const RAMP_S: f64 = 0.025;

struct Syllable {
    start: usize,
    len: usize,
    f0_start: f64,
    f0_end: f64,
    formants: [(f64, f64); 3],
    level: f64,
}

/// Resonance magnitude of a sum of formant peaks at `f`, with a gentle tilt.
fn envelope(f: f64, formants: &[(f64, f64); 3]) -> f64 {
    let peaks: f64 = formants
        .iter()
        .enumerate()
        .map(|(i, &(fc, bw))| {
            let x = (f - fc) / bw;
            (0.6f64).powi(i as i32) / (1.0 + x * x)
        })
        .sum();
    (0.02 + peaks) / (1.0 + f / 1500.0)
}

/// Flat top with raised-cosine ramps of `ramp` samples at both ends.
fn tukey(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    let d = i.min(len - 1 - i);
    if d >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (PI * (d as f64 + 0.5) / ramp as f64).cos())
    }
}

/// Speech-like clean signal: voiced syllables (harmonic series with a gliding
/// f0 between 80 and 300 Hz, shaped by three formant resonances and a
/// amplitude envelope with 25 ms raised-cosine ramps) separated by exact silences, peak
/// normalized to 0.9.
pub fn synth_clean_source(duration_s: f64, seed: u64, sample_rate: u32) -> Result<Waveform> {
    synth_clean_source_with_f0(duration_s, seed, sample_rate).map(|(w, _)| w)
}

/// Like [`synth_clean_source`] but also returns the per-sample f0 track (0 in gaps).
pub fn synth_clean_source_with_f0(duration_s: f64, seed: u64, sample_rate: u32) -> Result<(Waveform, Vec<f64>)> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Parameter(format!("duration must be positive, got {duration_s}")));
    }
    if sample_rate == 0 {
        return Err(Error::Parameter("sample rate must be positive".into()));
    }
    let fs = sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    let mut rng = rng_from_seed(seed);

    let mut syllables = Vec::new();
    let mut t = (rng.random_range(0.02..0.08) * fs) as usize;
    while t < n {
        let len = ((rng.random_range(0.12..0.30) * fs) as usize).min(n - t);
        let f0_start: f64 = rng.random_range(120.0..240.0);
        let f0_end = (f0_start * rng.random_range(0.92..1.08)).clamp(80.0, 300.0);
        let formants = [
            (rng.random_range(300.0..800.0), 90.0),
            (rng.random_range(900.0..2200.0), 120.0),
            (rng.random_range(2300.0..3000.0), 180.0),
        ];
        let level = rng.random_range(0.5..1.0);
        syllables.push(Syllable {
            start: t,
            len,
            f0_start,
            f0_end,
            formants,
            level,
        });
        t += len + (rng.random_range(0.04..0.12) * fs) as usize;
    }

    let mut x = vec![0.0; n];
    let mut f0_track = vec![0.0; n];
    let ramp = (RAMP_S * fs) as usize;
    for s in &syllables {
        let mut phase = 0.0;
        for i in 0..s.len {
            let u = i as f64 / s.len as f64;
            let f0 = s.f0_start + (s.f0_end - s.f0_start) * u;
            phase += 2.0 * PI * f0 / fs;
            let env = s.level * tukey(i, s.len, ramp);
            let mut v = 0.0;
            let mut k = 1;
            while k as f64 * f0 < MAX_HARMONIC_HZ {
                v += envelope(k as f64 * f0, &s.formants) * (k as f64 * phase).sin();
                k += 1;
            }
            x[s.start + i] = env * v;
            f0_track[s.start + i] = f0;
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Ok((Waveform::new(x, sample_rate)?, f0_track))
}
