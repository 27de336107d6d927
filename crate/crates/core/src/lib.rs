//! Real-time speech enhancement with a stacked dual-signal-transformation
//! LSTM network: an STFT masking core followed by a learned-basis masking
//! core, trained end to end on a time-domain SNR loss.
//!
//! * [`transforms`]: framing, FFT and learned-basis analysis/synthesis,
//!   masking, overlap-add.
//! * [`nn`]: LSTM, dense, instant layer norm, dropout, init, Adam.
//! * [`model`]: topologies (DTLN and baselines B1-B4), sequence and streaming
//!   inference, weight files.
//! * [`metrics`]: training losses, SI-SDR and STOI.
//! * [`data`]: WAV I/O, SNR-controlled mixing, dataset generation.
//! * [`train`]: the training loop and evaluation.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;
pub mod transforms;

pub use error::{Error, Result};
pub use model::{build_model, count_params, ModelParams, StreamState, TopologySpec};
pub use transforms::AudioBuffer;
