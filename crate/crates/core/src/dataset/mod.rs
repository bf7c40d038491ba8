//! Paired clean/reverberant data: `z = x ∗ h + noise` with synthetic sources
//! and statistical room impulse responses.

mod corpus;
mod rir;
mod source;

pub use corpus::{
    auto_norm, build_dataset, content_hash, load_dataset_dir, manifest_tsv, pair_from_waveforms, read_norm_file,
    write_dataset, DatasetConfig, PairedExample, UtteranceMeta,
};
pub use rir::{convolve, make_reverberant, schroeder_decay_db, synth_rir, RirSpec, DEFAULT_TAIL_GAIN};
pub use source::{synth_clean_source, synth_clean_source_with_f0};
