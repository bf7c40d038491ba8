//! Objective speech-quality measures: cepstral distance, log-likelihood
//! ratio, frequency-weighted segmental SNR and a simplified SRMR.
//!
//! Conventions shared by the intrusive measures: 512-sample (32 ms) Hamming
//! frames with 50 % overlap, LPC order 10, and a speech-activity gate that
//! keeps frames whose reference energy is within 40 dB of the loudest frame.

mod frames;
mod intrusive;
mod report;
mod srmr;

pub use frames::{active_frames, autocorrelation, levinson, lpc_cepstrum, Frames, LPC_ORDER, METRIC_FRAME, METRIC_HOP};
pub use intrusive::{
    cd_frames, cepstral_distance, fwsegsnr, fwsegsnr_frames, llr, llr_frames, mel_filterbank, CD_MAX, CEPSTRUM_LEN,
    FWSEG_BANDS, FWSEG_MAX, FWSEG_MIN, LLR_TRIM,
};
pub use report::{evaluate_corpus, MetricReport, MetricRow, REPORT_CONVENTIONS};
pub use srmr::{srmr_simplified, SRMR_MIN_SECONDS};
