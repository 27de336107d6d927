use ndarray::ArrayView2;

use super::network::process_frames;
use super::ModelParams;
use crate::error::{Error, Result};
use crate::nn::LstmState;

/// Per-stream recurrent state and overlap-add tail.
///
/// Feeding frame `k` to [`step_frame`] completes output samples
/// `[k * hop, (k + 1) * hop)`, so the algorithmic latency is one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    /// One entry per LSTM layer, core-major.
    pub lstm: Vec<LstmState>,
    /// `L - hop` partially accumulated output samples.
    pub tail: Vec<f64>,
}

impl StreamState {
    pub fn new(params: &ModelParams) -> Self {
        let topo = &params.topology;
        Self {
            lstm: (0..topo.num_lstm_layers())
                .map(|_| LstmState::zeros(topo.lstm_units))
                .collect(),
            tail: vec![0.0; topo.frame_len - topo.hop],
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.lstm {
            s.h.fill(0.0);
            s.c.fill(0.0);
        }
        self.tail.fill(0.0);
    }

    /// The remaining `L - hop` output samples after the last frame.
    pub fn flush(&mut self) -> Vec<f64> {
        let zeros = vec![0.0; self.tail.len()];
        std::mem::replace(&mut self.tail, zeros)
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        let topo = &params.topology;
        let layers_ok = self.lstm.len() == topo.num_lstm_layers()
            && self
                .lstm
                .iter()
                .all(|s| s.h.len() == topo.lstm_units && s.c.len() == topo.lstm_units);
        if !layers_ok || self.tail.len() != topo.frame_len - topo.hop {
            return Err(Error::shape(
                "stream state",
                format!(
                    "{} LSTM states of {} units",
                    topo.num_lstm_layers(),
                    topo.lstm_units
                ),
                format!("{} LSTM states, tail {}", self.lstm.len(), self.tail.len()),
            ));
        }
        Ok(())
    }
}

/// Processes one frame and returns the next `hop` output samples.
pub fn step_frame(
    params: &ModelParams,
    state: &mut StreamState,
    frame: &[f64],
) -> Result<Vec<f64>> {
    state.check(params)?;
    let topo = &params.topology;
    let (len, hop) = (topo.frame_len, topo.hop);
    if frame.len() != len {
        return Err(Error::shape("stream frame", len, frame.len()));
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input frame"));
    }
    let frames = ArrayView2::from_shape((1, len), frame).expect("row view");
    let out = process_frames(params, frames, &mut state.lstm)?;
    let scale = hop as f64 / len as f64;

    // Same accumulation order as `overlap_add`: earlier frames first.
    let mut acc = vec![0.0; len];
    acc[..len - hop].copy_from_slice(&state.tail);
    for (a, &v) in acc.iter_mut().zip(out.row(0)) {
        *a += scale * v;
    }
    state.tail.copy_from_slice(&acc[hop..]);
    acc.truncate(hop);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, forward_sequence, TopologySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn stream_all(params: &ModelParams, x: &[f64]) -> Vec<f64> {
        let topo = &params.topology;
        let mut state = StreamState::new(params);
        let frames = crate::transforms::frame_count(x.len(), topo.frame_len, topo.hop);
        let mut out = Vec::new();
        for k in 0..frames {
            let start = k * topo.hop;
            out.extend(step_frame(params, &mut state, &x[start..start + topo.frame_len]).unwrap());
        }
        out.extend(state.flush());
        out
    }

    #[test]
    fn streaming_matches_sequence() {
        let params = build_model(&TopologySpec::dtln(), 3).unwrap();
        let x = noise(16_000, 4);
        let offline = forward_sequence(&params, &x).unwrap();
        let online = stream_all(&params, &x);
        assert_eq!(offline.len(), online.len());
        let max = offline
            .iter()
            .zip(&online)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max <= 1e-10, "max diff {max}");
    }

    #[test]
    fn zero_frames_give_zero_hops() {
        let params = build_model(&TopologySpec::b4(), 0).unwrap();
        let mut state = StreamState::new(&params);
        for _ in 0..5 {
            let out = step_frame(&params, &mut state, &[0.0; 512]).unwrap();
            assert_eq!(out.len(), 128);
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn state_advances() {
        let params = build_model(&TopologySpec::dtln(), 1).unwrap();
        let frame = noise(512, 2);
        let mut state = StreamState::new(&params);
        let first = step_frame(&params, &mut state, &frame).unwrap();
        let snapshot = state.clone();
        let second = step_frame(&params, &mut state, &frame).unwrap();
        assert_ne!(snapshot, state);
        assert_ne!(first, second);
        state.reset();
        assert_eq!(state, StreamState::new(&params));
    }

    #[test]
    fn rejects_foreign_state() {
        let dtln = build_model(&TopologySpec::dtln(), 0).unwrap();
        let b1 = build_model(&TopologySpec::b1(), 0).unwrap();
        let mut state = StreamState::new(&b1);
        assert!(matches!(
            step_frame(&dtln, &mut state, &[0.0; 512]),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
