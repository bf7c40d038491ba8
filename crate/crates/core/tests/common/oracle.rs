//! Straight-line reimplementations of the intrusive measures: Gaussian
//! elimination instead of Levinson, a cosine sum instead of the cepstral
//! recursion, and a direct DFT instead of the FFT.

use std::f64::consts::PI;

const FRAME: usize = 512;
const HOP: usize = 256;
const ORDER: usize = 10;
const NCEP: usize = 12;
const CEP_GRID: usize = 8192;

fn window() -> Vec<f64> {
    (0..FRAME)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / FRAME as f64).cos())
        .collect()
}

fn frames(x: &[f64]) -> Vec<Vec<f64>> {
    let w = window();
    let n = (x.len() - FRAME) / HOP + 1;
    (0..n)
        .map(|f| (0..FRAME).map(|i| x[f * HOP + i] * w[i]).collect())
        .collect()
}

/// Frames whose unwindowed reference energy is within 40 dB of the loudest.
fn active(reference: &[f64]) -> Vec<usize> {
    let n = (reference.len() - FRAME) / HOP + 1;
    let e: Vec<f64> = (0..n)
        .map(|f| (0..FRAME).map(|i| reference[f * HOP + i].powi(2)).sum())
        .collect();
    let max = e.iter().cloned().fold(0.0, f64::max);
    (0..n).filter(|&f| 10.0 * (e[f] / max).log10() >= -40.0).collect()
}

fn autocorr(x: &[f64]) -> Vec<f64> {
    (0..=ORDER)
        .map(|k| (k..x.len()).map(|i| x[i] * x[i - k]).sum())
        .collect()
}

/// Solve `Σ_j a_j r_|i−j| = −r_i` (i = 1..p) by elimination with partial pivoting.
fn lpc(r: &[f64]) -> Vec<f64> {
    let p = ORDER;
    let mut m = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            m[i][j] = r[i.abs_diff(j)];
        }
        m[i][p] = -r[i + 1];
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..p {
            let f = m[row][col] / m[col][col];
            for k in col..=p {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut a = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| m[i][j] * a[j]).sum();
        a[i] = (m[i][p] - s) / m[i][i];
    }
    let mut out = vec![1.0];
    out.extend(a);
    out
}

/// `c_n = −(2/N) Σ_k log|A(e^{jω_k})| cos(n ω_k)` on a dense grid.
fn cepstrum(a: &[f64]) -> Vec<f64> {
    let logmag: Vec<f64> = (0..CEP_GRID)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / CEP_GRID as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, c) in a.iter().enumerate() {
                re += c * (w * i as f64).cos();
                im -= c * (w * i as f64).sin();
            }
            0.5 * (re * re + im * im).ln()
        })
        .collect();
    (1..=NCEP)
        .map(|n| {
            -2.0 / CEP_GRID as f64
                * logmag
                    .iter()
                    .enumerate()
                    .map(|(k, l)| l * (2.0 * PI * (n * k) as f64 / CEP_GRID as f64).cos())
                    .sum::<f64>()
        })
        .collect()
}

pub fn cd(reference: &[f64], degraded: &[f64]) -> f64 {
    let (fr, fd) = (frames(reference), frames(degraded));
    let act = active(reference);
    let mut total = 0.0;
    for &f in &act {
        let cr = cepstrum(&lpc(&autocorr(&fr[f])));
        let cdg = cepstrum(&lpc(&autocorr(&fd[f])));
        let d: f64 = (0..NCEP).map(|i| (cr[i] - cdg[i]).powi(2)).sum();
        let v = 10.0 / 10f64.ln() * (2.0 * d).sqrt();
        total += v.clamp(0.0, 10.0);
    }
    total / act.len() as f64
}

fn toeplitz_form(a: &[f64], r: &[f64]) -> f64 {
    let mut mat = vec![vec![0.0; ORDER + 1]; ORDER + 1];
    for (i, row) in mat.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = r[i.abs_diff(j)];
        }
    }
    let ra: Vec<f64> = mat
        .iter()
        .map(|row| row.iter().zip(a).map(|(m, x)| m * x).sum())
        .collect();
    a.iter().zip(&ra).map(|(x, y)| x * y).sum()
}

pub fn llr(reference: &[f64], degraded: &[f64]) -> f64 {
    let (fr, fd) = (frames(reference), frames(degraded));
    let mut v: Vec<f64> = active(reference)
        .into_iter()
        .map(|f| {
            let rr = autocorr(&fr[f]);
            let ar = lpc(&rr);
            let ad = lpc(&autocorr(&fd[f]));
            let x = (toeplitz_form(&ad, &rr) / toeplitz_form(&ar, &rr)).ln();
            if x < 0.0 {
                0.0
            } else {
                x
            }
        })
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep = ((0.95 * v.len() as f64).round() as usize).max(1).min(v.len());
    v[..keep].iter().sum::<f64>() / keep as f64
}

fn dft_mag(x: &[f64]) -> Vec<f64> {
    (0..=FRAME / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = 2.0 * PI * ((k * t) % FRAME) as f64 / FRAME as f64;
                re += v * ang.cos();
                im -= v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

pub fn fwsegsnr(reference: &[f64], degraded: &[f64], fs: f64) -> f64 {
    let bands = 23;
    let top = hz_to_mel(fs / 2.0);
    let centers: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let tri = |b: usize, f: f64| {
        let (l, c, h) = (centers[b], centers[b + 1], centers[b + 2]);
        if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < h {
            (h - f) / (h - c)
        } else {
            0.0
        }
    };
    let (fr, fd) = (frames(reference), frames(degraded));
    let mut vals = Vec::new();
    for f in active(reference) {
        let (mr, md) = (dft_mag(&fr[f]), dft_mag(&fd[f]));
        let mut num = 0.0;
        let mut den = 0.0;
        for b in 0..bands {
            let mut er = 0.0;
            let mut ed = 0.0;
            for k in 0..=FRAME / 2 {
                let w = tri(b, k as f64 * fs / FRAME as f64);
                er += w * mr[k];
                ed += w * md[k];
            }
            let snr = if er == ed {
                35.0
            } else {
                (10.0 * (er * er / ((er - ed) * (er - ed))).log10()).clamp(-10.0, 35.0)
            };
            num += er.powf(0.2) * snr;
            den += er.powf(0.2);
        }
        if den > 0.0 {
            vals.push((num / den).clamp(-10.0, 35.0));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}
