use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;
use dtln_core::model::{forward_sequence, step_frame, ModelParams, StreamState};
use dtln_core::transforms::frame_count;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frames processed and discarded before timing starts.
pub const WARMUP_FRAMES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Stream,
    Sequence,
}

impl BenchMode {
    fn name(self) -> &'static str {
        match self {
            BenchMode::Stream => "stream",
            BenchMode::Sequence => "sequence",
        }
    }
}

/// Per-frame timing statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub frames: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
    /// Hop duration in milliseconds.
    pub hop_ms: f64,
}

impl BenchReport {
    /// Mean per-frame time over the hop duration; below 1 is real time.
    pub fn real_time_factor(&self) -> f64 {
        self.mean_ms / self.hop_ms
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("mode", self.mode.name().to_string()),
            ("frames", self.frames.to_string()),
            ("mean", format!("{:.4} ms", self.mean_ms)),
            ("p95", format!("{:.4} ms", self.p95_ms)),
            ("max", format!("{:.4} ms", self.max_ms)),
            ("min", format!("{:.4} ms", self.min_ms)),
            ("hop", format!("{:.1} ms", self.hop_ms)),
            (
                "real-time factor",
                format!("{:.4}", self.real_time_factor()),
            ),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<18}{v:>14}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "mode,frames,mean_ms,p95_ms,max_ms,min_ms,real_time_factor\n{},{},{},{},{},{},{}\n",
            self.mode.name(),
            self.frames,
            self.mean_ms,
            self.p95_ms,
            self.max_ms,
            self.min_ms,
            self.real_time_factor()
        )
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Times inference on `seconds` of seeded uniform noise. Stream mode times
/// each [`step_frame`] call; sequence mode divides one whole-sequence pass by
/// the frame count, so all its statistics coincide.
pub fn run_bench(
    params: &ModelParams,
    seconds: f64,
    mode: BenchMode,
    seed: u64,
) -> Result<BenchReport> {
    let topo = &params.topology;
    let (len, hop) = (topo.frame_len, topo.hop);
    let n = (seconds * 16_000.0).round() as usize;
    anyhow::ensure!(
        n >= len,
        "need at least one {len}-sample frame, {seconds} s is too short"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let frames = frame_count(n, len, hop);
    let warm = (WARMUP_FRAMES - 1) * hop + len;
    let warm_signal: Vec<f64> = (0..warm).map(|_| rng.random_range(-0.5..0.5)).collect();
    let hop_ms = 1e3 * hop as f64 / 16_000.0;

    let mut times = match mode {
        BenchMode::Stream => {
            let mut state = StreamState::new(params);
            for k in 0..WARMUP_FRAMES {
                step_frame(params, &mut state, &warm_signal[k * hop..k * hop + len])?;
            }
            state.reset();
            let mut times = Vec::with_capacity(frames);
            for k in 0..frames {
                let frame = &signal[k * hop..k * hop + len];
                let t = Instant::now();
                let out = step_frame(params, &mut state, frame)?;
                times.push(ms(t.elapsed()));
                std::hint::black_box(out);
            }
            times
        }
        BenchMode::Sequence => {
            std::hint::black_box(forward_sequence(params, &warm_signal)?);
            let t = Instant::now();
            let out = forward_sequence(params, &signal)?;
            let per_frame = ms(t.elapsed()) / frames as f64;
            std::hint::black_box(out);
            vec![per_frame; frames]
        }
    };
    times.sort_by(f64::total_cmp);
    let p95_index = ((0.95 * frames as f64).ceil() as usize).clamp(1, frames) - 1;
    Ok(BenchReport {
        mode,
        frames,
        mean_ms: times.iter().sum::<f64>() / frames as f64,
        p95_ms: times[p95_index],
        max_ms: times[frames - 1],
        min_ms: times[0],
        hop_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dtln_core::{build_model, TopologySpec};

    #[test]
    fn ten_seconds_is_1247_frames() {
        let params = build_model(&TopologySpec::dtln(), 0).unwrap();
        let r = run_bench(&params, 10.0, BenchMode::Sequence, 1).unwrap();
        assert_eq!(r.frames, 1247);
        assert!(r.real_time_factor() > 0.0);
    }

    #[test]
    fn stream_statistics_are_ordered() {
        let params = build_model(&TopologySpec::b4(), 0).unwrap();
        let r = run_bench(&params, 0.5, BenchMode::Stream, 1).unwrap();
        assert_eq!(r.frames, 59);
        assert!(r.max_ms >= r.p95_ms && r.p95_ms >= r.min_ms && r.min_ms > 0.0);
        assert!(r.to_text().contains("real-time factor"));
        assert_eq!(r.to_csv().lines().count(), 2);
    }
}
