//! Length-preserving enhancement of whole signals.
//!
//! The input is padded with `L - hop` leading zeros and enough trailing
//! zeros that every input sample lies under `L / hop` frames; the output is
//! cropped back to the input's span.

use super::network::forward_sequence;
use super::stream::{step_frame, StreamState};
use super::ModelParams;
use crate::error::{Error, Result};

/// Inference strategy used by [`enhance_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Frame by frame through [`step_frame`].
    Stream,
    /// All frames at once through [`forward_sequence`].
    Sequence,
}

fn padded(params: &ModelParams, noisy: &[f64]) -> Result<(Vec<f64>, usize)> {
    if noisy.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let (len, hop) = (params.topology.frame_len, params.topology.hop);
    let lead = len - hop;
    let frames = (lead + noisy.len()).div_ceil(hop);
    let total = (frames - 1) * hop + len;
    let mut x = vec![0.0; total];
    x[lead..lead + noisy.len()].copy_from_slice(noisy);
    Ok((x, lead))
}

/// Enhances `noisy`, returning exactly `noisy.len()` samples.
pub fn enhance_with(params: &ModelParams, noisy: &[f64], mode: Mode) -> Result<Vec<f64>> {
    let (x, lead) = padded(params, noisy)?;
    let y = match mode {
        Mode::Sequence => forward_sequence(params, &x)?,
        Mode::Stream => {
            let (len, hop) = (params.topology.frame_len, params.topology.hop);
            let mut state = StreamState::new(params);
            let mut y = Vec::with_capacity(x.len());
            let mut start = 0;
            while start + len <= x.len() {
                y.extend(step_frame(params, &mut state, &x[start..start + len])?);
                start += hop;
            }
            y.extend(state.flush());
            y
        }
    };
    Ok(y[lead..lead + noisy.len()].to_vec())
}

/// [`enhance_with`] in sequence mode.
pub fn enhance(params: &ModelParams, noisy: &[f64]) -> Result<Vec<f64>> {
    enhance_with(params, noisy, Mode::Sequence)
}
