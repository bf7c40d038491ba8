use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{hamming_periodic, Waveform};

pub const SRMR_MIN_SECONDS: f64 = 1.0;
const ACOUSTIC_BANDS: usize = 23;
const LOW_HZ: f64 = 125.0;
const HIGH_HZ: f64 = 7500.0;
const SMOOTH_S: f64 = 0.020;
const ENV_RATE: f64 = 500.0;
const MOD_WINDOW_S: f64 = 0.256;
const MOD_HOP_S: f64 = 0.064;
const MOD_BANDS: usize = 8;
const MOD_LOW_HZ: f64 = 4.0;
const MOD_HIGH_HZ: f64 = 128.0;

fn erb_rate(f: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * f).log10()
}

fn erb_rate_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

fn erb_bandwidth(f: f64) -> f64 {
    24.7 * (4.37e-3 * f + 1.0)
}

/// Constant-peak-gain bandpass biquad (audio-EQ cookbook form).
#[derive(Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn bandpass(fc: f64, q: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w.cos() / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    }
}

/// Rectified, 20 ms boxcar-smoothed band envelope sampled at 500 Hz.
fn envelope(band: &[f64], fs: f64) -> Vec<f64> {
    let decim = (fs / ENV_RATE).round() as usize;
    let len = (SMOOTH_S * fs).round() as usize;
    let mut prefix = vec![0.0; band.len() + 1];
    for (i, v) in band.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v.abs();
    }
    (0..band.len())
        .step_by(decim)
        .map(|i| {
            let lo = (i + 1).saturating_sub(len);
            (prefix[i + 1] - prefix[lo]) / (i + 1 - lo) as f64
        })
        .collect()
}

/// Speech-to-reverberation modulation energy ratio, simplified: 23
/// ERB-spaced 4th-order bandpass channels between 125 Hz and 7.5 kHz, their
/// envelopes' modulation spectra over 256 ms windows, and the ratio of energy
/// in the lower four to the upper four of eight log-spaced modulation bands
/// from 4 to 128 Hz. Independent of overall gain.
pub fn srmr_simplified(w: &Waveform) -> Result<f64> {
    if w.duration_s() < SRMR_MIN_SECONDS {
        return Err(Error::Parameter(format!(
            "srmr needs at least {SRMR_MIN_SECONDS} s of audio, got {:.3} s",
            w.duration_s()
        )));
    }
    let fs = w.sample_rate as f64;
    if fs / 2.0 <= HIGH_HZ {
        return Err(Error::Parameter(format!(
            "sample rate {fs} too low for the {HIGH_HZ} Hz top band"
        )));
    }
    let (e_lo, e_hi) = (erb_rate(LOW_HZ), erb_rate(HIGH_HZ));
    let centers: Vec<f64> = (0..ACOUSTIC_BANDS)
        .map(|i| erb_rate_inv(e_lo + (e_hi - e_lo) * i as f64 / (ACOUSTIC_BANDS - 1) as f64))
        .collect();

    let win_len = (MOD_WINDOW_S * ENV_RATE).round() as usize;
    let hop = (MOD_HOP_S * ENV_RATE).round() as usize;
    let window = hamming_periodic(win_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win_len);
    let ratio = (MOD_HIGH_HZ / MOD_LOW_HZ).powf(1.0 / (MOD_BANDS - 1) as f64);
    let mod_edges: Vec<(f64, f64)> = (0..MOD_BANDS)
        .map(|i| {
            let c = MOD_LOW_HZ * ratio.powi(i as i32);
            (c / ratio.sqrt(), c * ratio.sqrt())
        })
        .collect();

    let mut energy = [0.0; MOD_BANDS];
    let mut buf = vec![Complex64::new(0.0, 0.0); win_len];
    for &fc in &centers {
        let bq = Biquad::bandpass(fc, fc / erb_bandwidth(fc), fs);
        let env = envelope(&bq.run(&bq.run(&w.samples)), fs);
        let mut start = 0;
        while start + win_len <= env.len() {
            let seg = &env[start..start + win_len];
            let m = seg.iter().sum::<f64>() / win_len as f64;
            for (b, (v, h)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
                *b = Complex64::new((v - m) * h, 0.0);
            }
            fft.process(&mut buf);
            for (k, c) in buf.iter().enumerate().take(win_len / 2 + 1).skip(1) {
                let f = k as f64 * ENV_RATE / win_len as f64;
                if let Some(band) = mod_edges.iter().position(|&(lo, hi)| f >= lo && f < hi) {
                    energy[band] += c.norm_sqr();
                }
            }
            start += hop;
        }
    }
    let low: f64 = energy[..MOD_BANDS / 2].iter().sum();
    let high: f64 = energy[MOD_BANDS / 2..].iter().sum();
    if low == 0.0 || high == 0.0 {
        return Err(Error::MetricUndefined("signal has no envelope modulation".into()));
    }
    Ok(low / high)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signal::SAMPLE_RATE;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64) -> Waveform {
        let mut rng = rng_from_seed(seed);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z
            })
            .collect();
        Waveform::new(x, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn gain_invariant() {
        let x = crate::dataset::synth_clean_source(2.0, 3, SAMPLE_RATE).unwrap();
        let base = srmr_simplified(&x).unwrap();
        for g in [0.1, 10.0] {
            let y = Waveform::new(x.samples.iter().map(|v| v * g).collect(), SAMPLE_RATE).unwrap();
            let s = srmr_simplified(&y).unwrap();
            assert!((s / base - 1.0).abs() < 0.01, "gain {g}: {s} vs {base}");
        }
    }

    #[test]
    fn speech_beats_white_noise() {
        let speech = crate::dataset::synth_clean_source(2.0, 4, SAMPLE_RATE).unwrap();
        let s = srmr_simplified(&speech).unwrap();
        let n = srmr_simplified(&white(32000, 5)).unwrap();
        assert!(s > n, "speech {s} noise {n}");
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(matches!(srmr_simplified(&white(8000, 1)), Err(Error::Parameter(_))));
    }

    #[test]
    fn bandpass_peaks_at_center() {
        let bq = Biquad::bandpass(1000.0, 4.0, 16000.0);
        let gain = |f: f64| {
            let x: Vec<f64> = (0..16000).map(|n| (2.0 * PI * f * n as f64 / 16000.0).sin()).collect();
            let y = bq.run(&x);
            y[8000..].iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        assert!((gain(1000.0) - 1.0).abs() < 1e-3);
        assert!(gain(500.0) < 0.3 && gain(2000.0) < 0.3);
    }
}
