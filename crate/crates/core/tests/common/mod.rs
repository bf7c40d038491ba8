#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use dereverb::dataset::{build_dataset, DatasetConfig, PairedExample};
use dereverb::signal::TileSpec;

/// Short noiseless utterances cut into 64×64 images.
pub fn tiny_corpus(n_utts: usize, duration_s: f64, seed: u64) -> Vec<PairedExample> {
    let cfg = DatasetConfig {
        n_utts,
        duration_s,
        seed,
        snr_db: f64::INFINITY,
        tile: TileSpec::new(64, 64).unwrap(),
        ..DatasetConfig::default()
    };
    build_dataset(&cfg).unwrap().0
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
