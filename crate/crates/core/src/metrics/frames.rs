use crate::error::{Error, Result};
use crate::signal::{hamming_periodic, Waveform};

pub const METRIC_FRAME: usize = 512;
pub const METRIC_HOP: usize = 256;
pub const LPC_ORDER: usize = 10;
const GATE_DB: f64 = 40.0;

/// Aligned reference/degraded framing plus the indices of speech-active frames.
pub struct Frames<'a> {
    pub reference: &'a [f64],
    pub degraded: &'a [f64],
    pub window: Vec<f64>,
    pub active: Vec<usize>,
}

impl<'a> Frames<'a> {
    pub fn new(reference: &'a Waveform, degraded: &'a Waveform) -> Result<Self> {
        if reference.len() != degraded.len() {
            return Err(Error::Dimension(format!(
                "reference has {} samples, degraded {}",
                reference.len(),
                degraded.len()
            )));
        }
        if reference.sample_rate != degraded.sample_rate {
            return Err(Error::Parameter(format!(
                "sample rates differ: {} vs {}",
                reference.sample_rate, degraded.sample_rate
            )));
        }
        let active = active_frames(&reference.samples)?;
        Ok(Frames {
            reference: &reference.samples,
            degraded: &degraded.samples,
            window: hamming_periodic(METRIC_FRAME),
            active,
        })
    }

    pub fn windowed(&self, signal: &[f64], frame: usize) -> Vec<f64> {
        let start = frame * METRIC_HOP;
        signal[start..start + METRIC_FRAME]
            .iter()
            .zip(&self.window)
            .map(|(x, w)| x * w)
            .collect()
    }
}

/// Frames (of the reference) whose energy is within 40 dB of the loudest.
pub fn active_frames(reference: &[f64]) -> Result<Vec<usize>> {
    if reference.len() < METRIC_FRAME {
        return Err(Error::MetricUndefined(format!(
            "{} samples is shorter than one {METRIC_FRAME}-sample frame",
            reference.len()
        )));
    }
    let n = (reference.len() - METRIC_FRAME) / METRIC_HOP + 1;
    let energy: Vec<f64> = (0..n)
        .map(|f| {
            reference[f * METRIC_HOP..f * METRIC_HOP + METRIC_FRAME]
                .iter()
                .map(|x| x * x)
                .sum()
        })
        .collect();
    let max = energy.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::MetricUndefined("reference is silent".into()));
    }
    let gate = max * 10f64.powf(-GATE_DB / 10.0);
    Ok((0..n).filter(|&f| energy[f] >= gate).collect())
}

/// Biased autocorrelation lags `0..=order`.
pub fn autocorrelation(x: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|lag| x[lag..].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Levinson–Durbin recursion. Returns `a` with `a[0] = 1` such that
/// `A(z) = Σ a_k z^−k` whitens the frame. A silent frame yields `A(z) = 1`.
pub fn levinson(r: &[f64]) -> Vec<f64> {
    let p = r.len() - 1;
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    if r[0] <= 0.0 {
        return a;
    }
    let mut err = r[0];
    let mut prev = a.clone();
    for i in 1..=p {
        let acc: f64 = r[i] + (1..i).map(|j| prev[j] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
        prev.copy_from_slice(&a);
    }
    a
}

/// First `n` cepstral coefficients (c1..cn) of the all-pole model `1/A(z)`.
pub fn lpc_cepstrum(a: &[f64], n: usize) -> Vec<f64> {
    let p = a.len() - 1;
    let mut c = vec![0.0; n + 1];
    for m in 1..=n {
        let mut acc = if m <= p { -a[m] } else { 0.0 };
        for k in m.saturating_sub(p).max(1)..m {
            acc -= (k as f64 / m as f64) * c[k] * a[m - k];
        }
        c[m] = acc;
    }
    c.remove(0);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levinson_on_ar1_recovers_coefficient() {
        // AR(1) x[n] = 0.8 x[n−1] + e: r[k] = 0.8^k
        let r: Vec<f64> = (0..=3).map(|k| 0.8f64.powi(k)).collect();
        let a = levinson(&r);
        assert!((a[1] + 0.8).abs() < 1e-12);
        assert!(a[2].abs() < 1e-12 && a[3].abs() < 1e-12);
    }

    #[test]
    fn cepstrum_of_single_pole() {
        // log 1/(1 − ρ z⁻¹) = Σ ρ^n/n z^−n
        let c = lpc_cepstrum(&[1.0, -0.5], 6);
        for (i, v) in c.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((v - 0.5f64.powf(n) / n).abs() < 1e-14);
        }
    }

    #[test]
    fn gate_drops_quiet_frames() {
        let mut x = vec![0.0; 4096];
        x[..1024]
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64 * 0.1).sin());
        let act = active_frames(&x).unwrap();
        assert_eq!(act, vec![0, 1, 2, 3]);
        assert!(matches!(
            active_frames(&vec![0.0; 4096]),
            Err(Error::MetricUndefined(_))
        ));
    }
}
