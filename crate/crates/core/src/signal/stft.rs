//! 512-sample Hamming STFT with 75 % overlap and its weighted overlap-add inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Waveform;

pub const FRAME_LEN: usize = 512;
pub const HOP: usize = 128;
/// One-sided bins of a 512-point DFT (DC..Nyquist).
pub const N_BINS: usize = FRAME_LEN / 2 + 1;
/// Bins fed to the network: the Nyquist bin is dropped.
pub const KEPT_BINS: usize = FRAME_LEN / 2;

const WOLA_FLOOR: f64 = 1e-12;

/// Magnitude and phase, both `N_BINS × n_frames`, frequency-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub n_frames: usize,
    /// Length of the analysed signal before frame padding.
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn zeros(n_frames: usize, signal_len: usize, sample_rate: u32) -> Self {
        ComplexSpectrogram {
            magnitude: vec![0.0; N_BINS * n_frames],
            phase: vec![0.0; N_BINS * n_frames],
            n_frames,
            signal_len,
            sample_rate,
        }
    }

    pub fn mag(&self, bin: usize, frame: usize) -> f64 {
        self.magnitude[bin * self.n_frames + frame]
    }

    pub fn phase_at(&self, bin: usize, frame: usize) -> f64 {
        self.phase[bin * self.n_frames + frame]
    }

    /// Multiply every bin by `gain` (phase unchanged).
    pub fn scaled(&self, gain: f64) -> Self {
        let mut s = self.clone();
        s.magnitude.iter_mut().for_each(|m| *m *= gain);
        s
    }
}

/// `0.54 − 0.46·cos(2πn/N)`, the DFT-even variant.
pub fn hamming_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Number of frames covering `len` samples with the last frame zero padded.
pub fn frame_count(len: usize) -> usize {
    if len == 0 {
        0
    } else if len <= FRAME_LEN {
        1
    } else {
        1 + (len - FRAME_LEN).div_ceil(HOP)
    }
}

/// Direct `O(N²)` DFT, the reference any FFT path is checked against.
pub fn reference_dft(frame: &[f64]) -> Vec<Complex64> {
    let n = frame.len();
    (0..n)
        .map(|k| {
            frame.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (t, &x)| {
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                acc + Complex64::new(x * ang.cos(), x * ang.sin())
            })
        })
        .collect()
}

fn plan(inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(FRAME_LEN)
    } else {
        planner.plan_fft_forward(FRAME_LEN)
    }
}

pub fn stft(w: &Waveform) -> ComplexSpectrogram {
    let n_frames = frame_count(w.len());
    let mut spec = ComplexSpectrogram::zeros(n_frames, w.len(), w.sample_rate);
    if n_frames == 0 {
        return spec;
    }
    let window = hamming_periodic(FRAME_LEN);
    let fft = plan(false);
    let mut buf = vec![Complex64::new(0.0, 0.0); FRAME_LEN];
    for f in 0..n_frames {
        let start = f * HOP;
        for (i, b) in buf.iter_mut().enumerate() {
            let x = w.samples.get(start + i).copied().unwrap_or(0.0);
            *b = Complex64::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(N_BINS).enumerate() {
            spec.magnitude[k * n_frames + f] = c.norm();
            spec.phase[k * n_frames + f] = c.arg();
        }
    }
    spec
}

/// Weighted overlap-add with squared-window normalization, trimmed to `signal_len`.
pub fn istft(s: &ComplexSpectrogram) -> Waveform {
    let n_frames = s.n_frames;
    let total = if n_frames == 0 {
        0
    } else {
        (n_frames - 1) * HOP + FRAME_LEN
    };
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let window = hamming_periodic(FRAME_LEN);
    let ifft = plan(true);
    let mut buf = vec![Complex64::new(0.0, 0.0); FRAME_LEN];
    for f in 0..n_frames {
        for k in 0..N_BINS {
            let c = Complex64::from_polar(s.mag(k, f), s.phase_at(k, f));
            buf[k] = c;
            if k > 0 && k < FRAME_LEN / 2 {
                buf[FRAME_LEN - k] = c.conj();
            }
        }
        // DC and Nyquist of a real frame are real
        buf[0].im = 0.0;
        buf[FRAME_LEN / 2].im = 0.0;
        ifft.process(&mut buf);
        let start = f * HOP;
        for i in 0..FRAME_LEN {
            out[start + i] += window[i] * buf[i].re / FRAME_LEN as f64;
            norm[start + i] += window[i] * window[i];
        }
    }
    let mut samples: Vec<f64> = out.iter().zip(&norm).map(|(o, n)| o / n.max(WOLA_FLOOR)).collect();
    samples.resize(s.signal_len, 0.0);
    Waveform {
        samples,
        sample_rate: s.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signal::snr_db;
    use rand::Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16000).unwrap()
    }

    #[test]
    fn frame_counting() {
        assert_eq!(frame_count(0), 0);
        assert_eq!(frame_count(100), 1);
        assert_eq!(frame_count(512), 1);
        assert_eq!(frame_count(513), 2);
        assert_eq!(frame_count(16000), 1 + (16000 - 512usize).div_ceil(128));
    }

    #[test]
    fn zero_and_empty_signals() {
        let s = stft(&wave(vec![0.0; 2000]));
        assert!(s.magnitude.iter().all(|&m| m == 0.0));
        let e = stft(&wave(vec![]));
        assert_eq!(e.n_frames, 0);
        assert!(istft(&e).is_empty());
        let z = istft(&ComplexSpectrogram::zeros(5, 1000, 16000));
        assert!(z.samples.iter().all(|&v| v == 0.0));
        assert_eq!(z.len(), 1000);
    }

    #[test]
    fn fft_matches_reference_dft() {
        let mut rng = rng_from_seed(3);
        let x: Vec<f64> = (0..FRAME_LEN).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = stft(&wave(x.clone()));
        let window = hamming_periodic(FRAME_LEN);
        let windowed: Vec<f64> = x.iter().zip(&window).map(|(a, b)| a * b).collect();
        let reference = reference_dft(&windowed);
        for k in 0..N_BINS {
            assert!((s.mag(k, 0) - reference[k].norm()).abs() < 1e-9);
            if reference[k].norm() > 1e-6 {
                let d = (s.phase_at(k, 0) - reference[k].arg()).rem_euclid(2.0 * PI);
                assert!(d.min(2.0 * PI - d) < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_peaks_at_bin_16() {
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * PI * 500.0 * n as f64 / 16000.0).cos())
            .collect();
        let s = stft(&wave(x));
        for f in 0..s.n_frames - 4 {
            let peak = (0..N_BINS)
                .max_by(|&a, &b| s.mag(a, f).total_cmp(&s.mag(b, f)))
                .unwrap();
            assert_eq!(peak, 16, "frame {f}");
        }
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = rng_from_seed(9);
        let x: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = stft(&wave(x.clone()));
        let window = hamming_periodic(FRAME_LEN);
        for f in 0..s.n_frames {
            let time: f64 = (0..FRAME_LEN)
                .map(|i| {
                    let v = x.get(f * HOP + i).copied().unwrap_or(0.0) * window[i];
                    v * v
                })
                .sum();
            let mut spec = s.mag(0, f).powi(2) + s.mag(N_BINS - 1, f).powi(2);
            spec += 2.0 * (1..N_BINS - 1).map(|k| s.mag(k, f).powi(2)).sum::<f64>();
            assert!((time - spec / FRAME_LEN as f64).abs() < 1e-9 * time.max(1.0));
        }
    }

    #[test]
    fn round_trip_white_noise_above_60db() {
        let mut rng = rng_from_seed(11);
        let x: Vec<f64> = (0..16000).map(|_| rng.random_range(-0.9..0.9)).collect();
        let y = istft(&stft(&wave(x.clone())));
        assert_eq!(y.len(), x.len());
        let inner = FRAME_LEN..x.len() - FRAME_LEN;
        assert!(snr_db(&x[inner.clone()], &y.samples[inner]) > 60.0);
    }

    #[test]
    fn istft_is_linear_in_gain() {
        let x: Vec<f64> = (0..3000).map(|n| ((n * 37) % 101) as f64 / 101.0 - 0.5).collect();
        let s = stft(&wave(x));
        let a = istft(&s);
        let b = istft(&s.scaled(2.0));
        for (u, v) in a.samples.iter().zip(&b.samples) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }
}
