use std::fmt::Write as _;

use super::intrusive::{cepstral_distance, fwsegsnr, llr};
use super::srmr::srmr_simplified;
use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Header line describing the fixed metric constants.
pub const REPORT_CONVENTIONS: &str = "# conventions: 32 ms hamming frames, 50% overlap, lpc order 10, \
cd 12 cepstra clamp [0,10], llr mean of smallest 95%, fwsegsnr 23 mel bands gamma 0.2 clamp [-10,35], \
activity gate -40 dB, srmr simplified (23 erb bands, 8 modulation bands 4-128 Hz)";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub cd: f64,
    pub llr: f64,
    pub fwsegsnr: f64,
    pub srmr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: MetricRow,
    /// Pairs whose metrics could not be computed.
    pub skipped: Vec<(String, String)>,
}

impl MetricReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{REPORT_CONVENTIONS}");
        s.push_str("utt_id\tcd\tllr\tfwsegsnr\tsrmr\n");
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.id, r.cd, r.llr, r.fwsegsnr, r.srmr
            );
        }
        s
    }
}

fn score(id: &str, reference: &Waveform, degraded: &Waveform) -> Result<MetricRow> {
    Ok(MetricRow {
        id: id.to_string(),
        cd: cepstral_distance(reference, degraded)?,
        llr: llr(reference, degraded)?,
        fwsegsnr: fwsegsnr(reference, degraded)?,
        srmr: srmr_simplified(degraded)?,
    })
}

/// Score `(id, reference, degraded)` triples on all available cores. Pairs
/// that fail are reported in `skipped` and left out of the means.
pub fn evaluate_corpus(pairs: &[(String, Waveform, Waveform)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Parameter("no utterance pairs to evaluate".into()));
    }
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(pairs.len());
    let chunk = pairs.len().div_ceil(workers);
    let results: Vec<Result<MetricRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|(id, r, d)| score(id, r, d)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("metric worker panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (res, (id, _, _)) in results.into_iter().zip(pairs) {
        match res {
            Ok(r) => rows.push(r),
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                skipped.push((id.clone(), e.to_string()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::MetricUndefined(format!("all {} pairs failed", pairs.len())));
    }
    let n = rows.len() as f64;
    let avg = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean = MetricRow {
        id: "mean".into(),
        cd: avg(|r| r.cd),
        llr: avg(|r| r.llr),
        fwsegsnr: avg(|r| r.fwsegsnr),
        srmr: avg(|r| r.srmr),
    };
    Ok(MetricReport { rows, mean, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_clean_source;
    use crate::signal::SAMPLE_RATE;

    fn pair(seed: u64) -> (String, Waveform, Waveform) {
        let x = synth_clean_source(1.2, seed, SAMPLE_RATE).unwrap();
        let mut y = x.clone();
        for i in 1..y.len() {
            y.samples[i] += 0.3 * x.samples[i - 1];
        }
        (format!("u{seed}"), x, y)
    }

    #[test]
    fn single_pair_report_equals_direct_scores() {
        let p = pair(1);
        let rep = evaluate_corpus(std::slice::from_ref(&p)).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].cd, cepstral_distance(&p.1, &p.2).unwrap());
        assert_eq!(rep.mean.fwsegsnr, rep.rows[0].fwsegsnr);
    }

    #[test]
    fn means_are_permutation_invariant_and_match_rows() {
        let pairs: Vec<_> = (1..5).map(pair).collect();
        let a = evaluate_corpus(&pairs).unwrap();
        let mut rev = pairs.clone();
        rev.reverse();
        let b = evaluate_corpus(&rev).unwrap();
        assert!((a.mean.cd - b.mean.cd).abs() < 1e-12);
        assert!((a.mean.srmr - b.mean.srmr).abs() < 1e-12);
        let hand = a.rows.iter().map(|r| r.llr).sum::<f64>() / 4.0;
        assert!((a.mean.llr - hand).abs() < 1e-12);
    }

    #[test]
    fn failures_are_skipped_and_counted() {
        let mut pairs: Vec<_> = (1..3).map(pair).collect();
        let silent = Waveform::new(vec![0.0; 20000], SAMPLE_RATE).unwrap();
        pairs.push(("bad".into(), silent.clone(), silent));
        let rep = evaluate_corpus(&pairs).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.skipped.len(), 1);
        let tsv = rep.to_tsv();
        assert!(tsv.starts_with("# conventions"));
        assert_eq!(tsv.lines().count(), 2 + 2 + 1);
        assert!(tsv.lines().last().unwrap().starts_with("mean\t"));
    }
}
