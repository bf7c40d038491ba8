//! RIFF/WAVE PCM-16 mono reader and writer.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const PCM: u16 = 1;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(Error::format(0, "missing RIFF header"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::format(8, "RIFF form type is not WAVE"));
    }
    let mut pos = 12usize;
    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| Error::format(pos as u64 + 4, "fmt chunk runs past end of file"))?;
                if size < 16 {
                    return Err(Error::format(
                        pos as u64 + 4,
                        format!("fmt chunk too short ({size} bytes)"),
                    ));
                }
                let format = u16_at(bytes, body);
                if format != PCM {
                    return Err(Error::format(
                        body as u64,
                        format!("unsupported codec tag {format:#06x}, only PCM (1) is accepted"),
                    ));
                }
                let channels = u16_at(bytes, body + 2);
                if channels != 1 {
                    return Err(Error::format(
                        body as u64 + 2,
                        format!("{channels} channels, only mono is accepted"),
                    ));
                }
                let bits = u16_at(bytes, body + 14);
                if bits != 16 {
                    return Err(Error::format(
                        body as u64 + 14,
                        format!("{bits}-bit samples, only 16-bit is accepted"),
                    ));
                }
                let rate = u32_at(bytes, body + 4);
                if rate == 0 {
                    return Err(Error::format(body as u64 + 4, "zero sample rate"));
                }
                sample_rate = Some(rate);
                pos = end;
            }
            b"data" => {
                let end = end.ok_or_else(|| Error::format(pos as u64 + 4, "data chunk runs past end of file"))?;
                data = Some(&bytes[body..end]);
                pos = end;
            }
            _ => {
                pos = end.ok_or_else(|| Error::format(pos as u64 + 4, "chunk runs past end of file"))?;
            }
        }
        // chunks are word aligned
        if size % 2 == 1 {
            pos += 1;
        }
    }
    let sample_rate = sample_rate.ok_or_else(|| Error::format(12, "no fmt chunk"))?;
    let data = data.ok_or_else(|| Error::format(pos as u64, "no data chunk"))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(Waveform { samples, sample_rate })
}

/// Encode as 16-bit PCM mono. Samples are rounded to the nearest code and clipped.
pub fn wav_bytes(w: &Waveform) -> Vec<u8> {
    let data_len = (w.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("{} not found", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    read_wav_bytes(&bytes)
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    std::fs::write(path, wav_bytes(w)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tone_round_trip_within_quantization() {
        let w = Waveform::new(
            (0..16000)
                .map(|n| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.len(), w.len());
        let worst = w
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0);
    }

    #[test]
    fn empty_data_chunk_is_empty_waveform() {
        let w = Waveform::new(vec![], 16000).unwrap();
        let back = read_wav_bytes(&wav_bytes(&w)).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn non_pcm_rejected_with_offset() {
        let mut bytes = wav_bytes(&Waveform::new(vec![0.1; 4], 16000).unwrap());
        bytes[20] = 3; // IEEE float tag
        match read_wav_bytes(&bytes) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, 20);
                assert!(msg.contains("codec"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(
            read_wav_bytes(b"RIFX\0\0\0\0WAVE"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            read_wav_bytes(b"RIFF\0\0\0\0AVI "),
            Err(Error::Format { offset: 8, .. })
        ));
        let mut stereo = wav_bytes(&Waveform::new(vec![0.0; 4], 16000).unwrap());
        stereo[22] = 2;
        assert!(matches!(read_wav_bytes(&stereo), Err(Error::Format { offset: 22, .. })));
        let full = wav_bytes(&Waveform::new(vec![0.0; 4], 16000).unwrap());
        assert!(matches!(
            read_wav_bytes(&full[..full.len() - 2]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn unknown_chunks_skipped() {
        let w = Waveform::new(vec![0.25, -0.5], 16000).unwrap();
        let plain = wav_bytes(&w);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        assert_eq!(read_wav_bytes(&bytes).unwrap(), w);
    }

    proptest! {
        #[test]
        fn codes_survive_round_trip(codes in proptest::collection::vec(any::<i16>(), 0..64)) {
            let w = Waveform::new(codes.iter().map(|&c| c as f64 / 32768.0).collect(), 16000).unwrap();
            prop_assert_eq!(read_wav_bytes(&wav_bytes(&w)).unwrap(), w);
        }
    }
}
