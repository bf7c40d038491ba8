use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::frames::{autocorrelation, levinson, lpc_cepstrum, Frames, LPC_ORDER, METRIC_FRAME};
use crate::error::Result;
use crate::signal::Waveform;

/// Cepstral coefficients compared by CD (c0 excluded).
pub const CEPSTRUM_LEN: usize = 12;
pub const CD_MAX: f64 = 10.0;
/// Fraction of (smallest) frame LLR values averaged.
pub const LLR_TRIM: f64 = 0.95;
pub const FWSEG_BANDS: usize = 23;
pub const FWSEG_MIN: f64 = -10.0;
pub const FWSEG_MAX: f64 = 35.0;
const FWSEG_GAMMA: f64 = 0.2;

fn lpc(frame: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let r = autocorrelation(frame, LPC_ORDER);
    let a = levinson(&r);
    (a, r)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-active-frame CD values.
pub fn cd_frames(reference: &Waveform, degraded: &Waveform) -> Result<Vec<f64>> {
    let fr = Frames::new(reference, degraded)?;
    let k = 10.0 / std::f64::consts::LN_10;
    Ok(fr
        .active
        .iter()
        .map(|&f| {
            let cr = lpc_cepstrum(&lpc(&fr.windowed(fr.reference, f)).0, CEPSTRUM_LEN);
            let cd = lpc_cepstrum(&lpc(&fr.windowed(fr.degraded, f)).0, CEPSTRUM_LEN);
            let d: f64 = cr.iter().zip(&cd).map(|(a, b)| (a - b) * (a - b)).sum();
            (k * (2.0 * d).sqrt()).clamp(0.0, CD_MAX)
        })
        .collect())
}

/// Mean of the clamped per-frame cepstral distance in dB.
pub fn cepstral_distance(reference: &Waveform, degraded: &Waveform) -> Result<f64> {
    Ok(mean(&cd_frames(reference, degraded)?))
}

fn quad(a: &[f64], r: &[f64]) -> f64 {
    let p = a.len();
    let mut s = 0.0;
    for i in 0..p {
        for j in 0..p {
            s += a[i] * r[i.abs_diff(j)] * a[j];
        }
    }
    s
}

/// Per-active-frame LLR values, floored at 0.
pub fn llr_frames(reference: &Waveform, degraded: &Waveform) -> Result<Vec<f64>> {
    let fr = Frames::new(reference, degraded)?;
    Ok(fr
        .active
        .iter()
        .map(|&f| {
            let (a_ref, r_ref) = lpc(&fr.windowed(fr.reference, f));
            let (a_deg, _) = lpc(&fr.windowed(fr.degraded, f));
            (quad(&a_deg, &r_ref) / quad(&a_ref, &r_ref)).ln().max(0.0)
        })
        .collect())
}

/// Mean of the smallest 95 % of per-frame LLR values.
pub fn llr(reference: &Waveform, degraded: &Waveform) -> Result<f64> {
    let mut v = llr_frames(reference, degraded)?;
    v.sort_by(f64::total_cmp);
    let keep = ((v.len() as f64 * LLR_TRIM).round() as usize).clamp(1, v.len());
    Ok(mean(&v[..keep]))
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `FWSEG_BANDS × (METRIC_FRAME/2 + 1)` triangular weights on a mel grid
/// spanning 0 Hz to Nyquist.
pub fn mel_filterbank(sample_rate: u32) -> Vec<Vec<f64>> {
    let bins = METRIC_FRAME / 2 + 1;
    let top = mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..FWSEG_BANDS + 2)
        .map(|i| mel_inv(top * i as f64 / (FWSEG_BANDS + 1) as f64))
        .collect();
    (0..FWSEG_BANDS)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / METRIC_FRAME as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-active-frame frequency-weighted SNR in dB. Band SNRs are clamped to
/// `[−10, 35]` before weighting, so identical signals score exactly 35.
pub fn fwsegsnr_frames(reference: &Waveform, degraded: &Waveform) -> Result<Vec<f64>> {
    let fr = Frames::new(reference, degraded)?;
    let bank = mel_filterbank(reference.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(METRIC_FRAME);
    let spectrum = |x: Vec<f64>| {
        let mut buf: Vec<Complex64> = x.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        buf[..METRIC_FRAME / 2 + 1]
            .iter()
            .map(|c| c.norm())
            .collect::<Vec<f64>>()
    };
    let bands = |mag: &[f64]| -> Vec<f64> {
        bank.iter()
            .map(|w| w.iter().zip(mag).map(|(a, b)| a * b).sum())
            .collect()
    };
    let mut out = Vec::with_capacity(fr.active.len());
    for &f in &fr.active {
        let r = bands(&spectrum(fr.windowed(fr.reference, f)));
        let d = bands(&spectrum(fr.windowed(fr.degraded, f)));
        let (mut num, mut den) = (0.0, 0.0);
        for (rb, db) in r.iter().zip(&d) {
            let w = rb.powf(FWSEG_GAMMA);
            let err = (rb - db) * (rb - db);
            let snr = if err == 0.0 {
                FWSEG_MAX
            } else {
                (10.0 * (rb * rb / err).log10()).clamp(FWSEG_MIN, FWSEG_MAX)
            };
            num += w * snr;
            den += w;
        }
        if den > 0.0 {
            out.push((num / den).clamp(FWSEG_MIN, FWSEG_MAX));
        }
    }
    Ok(out)
}

pub fn fwsegsnr(reference: &Waveform, degraded: &Waveform) -> Result<f64> {
    let v = fwsegsnr_frames(reference, degraded)?;
    if v.is_empty() {
        return Err(crate::Error::MetricUndefined(
            "no frame has in-band reference energy".into(),
        ));
    }
    Ok(mean(&v))
}
