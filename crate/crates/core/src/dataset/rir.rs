use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::Waveform;

/// Initial standard deviation of the reverberant tail relative to the direct path.
pub const DEFAULT_TAIL_GAIN: f64 = 0.08;

/// Exponentially decaying Gaussian-noise impulse response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RirSpec {
    /// Seconds for the energy envelope to fall by 60 dB.
    pub t60: f64,
    /// Sample index of the unit direct-path impulse.
    pub direct_delay: usize,
    /// Total length in samples.
    pub length: usize,
    pub seed: u64,
    pub tail_gain: f64,
}

impl RirSpec {
    /// Zero delay, length 1.5·t60 so the tail is cut well below −60 dB.
    pub fn new(t60: f64, seed: u64, sample_rate: u32) -> Self {
        RirSpec {
            t60,
            direct_delay: 0,
            length: (1.5 * t60 * sample_rate as f64).ceil() as usize + 1,
            seed,
            tail_gain: DEFAULT_TAIL_GAIN,
        }
    }
}

/// `h[d] = 1`, `h[d + n] = g·N(0,1)·exp(−3·ln10·n/(fs·t60))` for `n ≥ 1`.
pub fn synth_rir(spec: &RirSpec, sample_rate: u32) -> Result<Vec<f64>> {
    if !(spec.t60 > 0.0) || !spec.t60.is_finite() {
        return Err(Error::Parameter(format!("t60 must be positive, got {}", spec.t60)));
    }
    if spec.length <= spec.direct_delay {
        return Err(Error::Parameter(format!(
            "rir length {} leaves no room for the direct path at {}",
            spec.length, spec.direct_delay
        )));
    }
    let mut rng = rng_from_seed(spec.seed);
    let decay = 3.0 * std::f64::consts::LN_10 / (spec.t60 * sample_rate as f64);
    let mut h = vec![0.0; spec.length];
    h[spec.direct_delay] = 1.0;
    for (n, v) in h.iter_mut().enumerate().skip(spec.direct_delay + 1) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = spec.tail_gain * z * (-decay * (n - spec.direct_delay) as f64).exp();
    }
    Ok(h)
}

/// Schroeder backward integral of `h[from..]²`, in dB relative to its start.
pub fn schroeder_decay_db(h: &[f64], from: usize) -> Vec<f64> {
    let tail = &h[from.min(h.len())..];
    let mut edc = vec![0.0; tail.len()];
    let mut acc = 0.0;
    for i in (0..tail.len()).rev() {
        acc += tail[i] * tail[i];
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    edc.iter()
        .map(|e| 10.0 * (e.max(f64::MIN_POSITIVE) / total).log10())
        .collect()
}

/// Full linear convolution via zero-padded FFT.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |s: &[f64]| {
        let mut b: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        b.resize(n, Complex64::new(0.0, 0.0));
        b
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(u, v)| *u *= v);
    inv.process(&mut a);
    a[..out_len].iter().map(|c| c.re / n as f64).collect()
}

/// `(clean ∗ rir)` truncated to the clean length, plus white Gaussian noise at
/// `snr_db` relative to the reverberant power (`f64::INFINITY` disables the
/// noise), then scaled down if its peak exceeds 0.99.
pub fn make_reverberant(clean: &Waveform, rir: &[f64], snr_db: f64, seed: u64) -> Result<Waveform> {
    let mut z = convolve(&clean.samples, rir);
    z.truncate(clean.len());
    if snr_db.is_finite() {
        let power = z.iter().map(|v| v * v).sum::<f64>() / z.len().max(1) as f64;
        if clean.power() == 0.0 || power == 0.0 {
            return Err(Error::Parameter("cannot set an SNR on a silent signal".into()));
        }
        let noise_std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = rng_from_seed(derive_seed(seed, 0x6E_6F69_7365));
        let mut noise: Vec<f64> = (0..z.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        // rescale the realisation so the ratio holds exactly, not just in expectation
        let realised = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
        let g = noise_std / realised.sqrt();
        noise.iter_mut().for_each(|v| *v *= g);
        z.iter_mut().zip(&noise).for_each(|(a, b)| *a += b);
    }
    let mut w = Waveform::new(z, clean.sample_rate)?;
    w.limit_peak(0.99);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SAMPLE_RATE;

    fn naive(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                y[i + j] += a * b;
            }
        }
        y
    }

    /// First time (s) at which the tail's Schroeder curve reaches −60 dB.
    fn measured_t60(h: &[f64], d: usize) -> f64 {
        let edc = schroeder_decay_db(h, d + 1);
        let idx = edc.iter().position(|&v| v <= -60.0).expect("never reaches -60 dB");
        (idx + 1) as f64 / SAMPLE_RATE as f64
    }

    #[test]
    fn schroeder_t60_within_ten_percent() {
        for (i, &t60) in [0.2, 0.25, 0.4, 0.5, 0.7, 0.8].iter().enumerate() {
            let mut spec = RirSpec::new(t60, 100 + i as u64, SAMPLE_RATE);
            spec.direct_delay = 40;
            spec.length += 40;
            let h = synth_rir(&spec, SAMPLE_RATE).unwrap();
            assert_eq!(h[40], 1.0);
            assert!(h[..40].iter().all(|&v| v == 0.0));
            let m = measured_t60(&h, 40);
            assert!((m - t60).abs() <= 0.1 * t60, "t60 {t60}: measured {m}");
        }
    }

    #[test]
    fn shorter_t60_decays_faster() {
        let a = RirSpec::new(0.2, 1, SAMPLE_RATE);
        let b = RirSpec::new(0.8, 1, SAMPLE_RATE);
        let env = |s: &RirSpec, n: usize| (-3.0 * std::f64::consts::LN_10 * n as f64 / (s.t60 * 16000.0)).exp();
        for n in [1usize, 10, 100, 1000, 4000] {
            assert!(env(&a, n) < env(&b, n));
        }
        // same seed, same noise draws: the magnitude ratio follows the envelopes
        let ha = synth_rir(&a, SAMPLE_RATE).unwrap();
        let hb = synth_rir(&b, SAMPLE_RATE).unwrap();
        for n in (1..ha.len()).step_by(97) {
            assert!(ha[n].abs() <= hb[n].abs());
        }
    }

    #[test]
    fn rir_is_deterministic_and_validated() {
        let s = RirSpec::new(0.5, 9, SAMPLE_RATE);
        assert_eq!(synth_rir(&s, SAMPLE_RATE).unwrap(), synth_rir(&s, SAMPLE_RATE).unwrap());
        assert!(synth_rir(&RirSpec { t60: 0.0, ..s }, SAMPLE_RATE).is_err());
        assert!(synth_rir(&RirSpec { length: 0, ..s }, SAMPLE_RATE).is_err());
    }

    #[test]
    fn fft_convolution_matches_naive_loop() {
        let x: Vec<f64> = (0..700).map(|i| ((i * 13) % 17) as f64 / 17.0 - 0.5).collect();
        let h = synth_rir(&RirSpec::new(0.05, 3, SAMPLE_RATE), SAMPLE_RATE).unwrap();
        let fast = convolve(&x, &h);
        let slow = naive(&x, &h);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_impulse_without_noise_is_identity() {
        let clean = Waveform::new((0..500).map(|i| (i as f64 * 0.03).sin() * 0.5).collect(), SAMPLE_RATE).unwrap();
        let z = make_reverberant(&clean, &[1.0], f64::INFINITY, 0).unwrap();
        for (a, b) in z.samples.iter().zip(&clean.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_hits_requested_snr() {
        let clean = Waveform::new(
            (0..16000).map(|i| (i as f64 * 0.05).sin() * 0.05).collect(),
            SAMPLE_RATE,
        )
        .unwrap();
        let h = synth_rir(&RirSpec::new(0.4, 4, SAMPLE_RATE), SAMPLE_RATE).unwrap();
        let dry = make_reverberant(&clean, &h, f64::INFINITY, 1).unwrap();
        let wet = make_reverberant(&clean, &h, 20.0, 1).unwrap();
        assert!(wet.peak() < 0.99, "limiter engaged; lower the test amplitude");
        let p_sig = dry.samples.iter().map(|v| v * v).sum::<f64>();
        let p_noise = dry
            .samples
            .iter()
            .zip(&wet.samples)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>();
        let snr = 10.0 * (p_sig / p_noise).log10();
        assert!((snr - 20.0).abs() < 0.1, "{snr}");
    }

    #[test]
    fn loud_mixture_is_limited() {
        let clean = Waveform::new(vec![0.9; 4000], SAMPLE_RATE).unwrap();
        let z = make_reverberant(&clean, &[1.0, 0.8, 0.6], 10.0, 2).unwrap();
        assert!((z.peak() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn silent_clean_with_finite_snr_fails() {
        let clean = Waveform::new(vec![0.0; 100], SAMPLE_RATE).unwrap();
        assert!(matches!(
            make_reverberant(&clean, &[1.0], 20.0, 0),
            Err(Error::Parameter(_))
        ));
        assert!(make_reverberant(&clean, &[1.0], f64::INFINITY, 0).is_ok());
    }
}
