//! Audio files, SNR-controlled mixing and training-set generation.

mod dataset;
mod mix;
pub mod synth;
mod wav;

pub use dataset::{
    build_dataset, plan_pair, snr_grid, split_indices, DatasetManifest, ManifestEntry, PairPlan,
    Split, SEGMENT_SECONDS, SNR_LEVELS, SNR_MAX_DB, SNR_MIN_DB,
};
pub use mix::{mix_at_snr, noise_gain, Mixture, PEAK_LIMIT};
pub use wav::{read_wav, write_wav};
