//! Short-time objective intelligibility (classic, non-extended variant).

use ndarray::{s, Array2, Axis};

use super::resample::resample_poly;
use crate::error::{Error, Result};
use crate::transforms::rfft;

const FS: u32 = 10_000;
const FRAME: usize = 256;
const NFFT: usize = 512;
const HOP: usize = FRAME / 2;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per correlation segment (384 ms).
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Hann window of length `FRAME + 2` with its zero end points removed.
fn window() -> Vec<f64> {
    let m = (FRAME + 2) as f64;
    (1..=FRAME)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (m - 1.0)).cos())
        .collect()
}

/// Start indices `0, HOP, ...` strictly below `len - FRAME`.
fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drops frames more than 40 dB below the loudest frame of `x`, in both
/// signals, and re-synthesizes them by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let windowed = |sig: &[f64], start: usize| -> Vec<f64> {
        sig[start..start + FRAME]
            .iter()
            .zip(w)
            .map(|(a, b)| a * b)
            .collect()
    };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let norm = windowed(x, s).iter().map(|v| v * v).sum::<f64>().sqrt();
            20.0 * (norm + EPS).log10()
        })
        .collect();
    let loudest = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| loudest - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        let o = i * HOP;
        for (n, (a, b)) in windowed(x, s).into_iter().zip(windowed(y, s)).enumerate() {
            xs[o + n] += a;
            ys[o + n] += b;
        }
    }
    (xs, ys)
}

/// One-third octave band matrix, `BANDS x (NFFT/2 + 1)`.
fn third_octave_matrix() -> Array2<f64> {
    let bins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..bins)
        .map(|k| k as f64 * FS as f64 / NFFT as f64)
        .collect();
    let nearest = |target: f64| -> usize {
        let mut best = 0;
        for (k, f) in freqs.iter().enumerate() {
            if (f - target).powi(2) < (freqs[best] - target).powi(2) {
                best = k;
            }
        }
        best
    };
    let mut obm = Array2::zeros((BANDS, bins));
    for band in 0..BANDS {
        let exponent = |k: i32| 2f64.powf(k as f64 / 6.0);
        let lo = nearest(MIN_FREQ * exponent(2 * band as i32 - 1));
        let hi = nearest(MIN_FREQ * exponent(2 * band as i32 + 1));
        obm.slice_mut(s![band, lo..hi]).fill(1.0);
    }
    obm
}

/// Band envelopes `sqrt(OBM |X|^2)`, shape `BANDS x frames`.
fn band_envelopes(x: &[f64], w: &[f64], obm: &Array2<f64>) -> Array2<f64> {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let mut power = Array2::zeros((NFFT / 2 + 1, starts.len()));
    let mut buf = vec![0.0; NFFT];
    for (j, &s) in starts.iter().enumerate() {
        for (n, slot) in buf[..FRAME].iter_mut().enumerate() {
            *slot = x[s + n] * w[n];
        }
        for (k, c) in rfft(&buf).into_iter().enumerate() {
            power[[k, j]] = c.norm_sqr();
        }
    }
    obm.dot(&power).mapv(f64::sqrt)
}

fn row_normalize(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let mean = row.mean().unwrap_or(0.0);
        row.mapv_inplace(|v| v - mean);
        let norm = row.dot(&row).sqrt() + EPS;
        row.mapv_inplace(|v| v / norm);
    }
    m
}

/// STOI of `estimate` against the clean `reference`, both at `sample_rate`
/// (resampled internally to 10 kHz). Requires at least one second of audio
/// and enough non-silent material for one 384 ms segment.
pub fn stoi(estimate: &[f64], reference: &[f64], sample_rate: u32) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape("stoi inputs", reference.len(), estimate.len()));
    }
    if sample_rate == 0 || reference.len() < sample_rate as usize {
        return Err(Error::InvalidArgument(format!(
            "stoi needs at least 1 s of audio, got {} samples at {sample_rate} Hz",
            reference.len()
        )));
    }
    let x = resample_poly(reference, sample_rate, FS)?;
    let y = resample_poly(estimate, sample_rate, FS)?;
    let w = window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let obm = third_octave_matrix();
    let x_tob = band_envelopes(&x, &w, &obm);
    let y_tob = band_envelopes(&y, &w, &obm);
    let frames = x_tob.ncols();
    if frames < SEGMENT {
        return Err(Error::InvalidArgument(format!(
            "stoi needs {SEGMENT} non-silent frames, found {frames}"
        )));
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    for m in 0..segments {
        let xs = x_tob.slice(s![.., m..m + SEGMENT]).to_owned();
        let mut ys = y_tob.slice(s![.., m..m + SEGMENT]).to_owned();
        for (mut yr, xr) in ys.axis_iter_mut(Axis(0)).zip(xs.axis_iter(Axis(0))) {
            let scale = xr.dot(&xr).sqrt() / (yr.dot(&yr).sqrt() + EPS);
            for (yv, xv) in yr.iter_mut().zip(xr) {
                *yv = (*yv * scale).min(xv * clip);
            }
        }
        let xs = row_normalize(xs);
        let ys = row_normalize(ys);
        total += (&xs * &ys).sum();
    }
    Ok(total / (segments * BANDS) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_matrix_edges() {
        let obm = third_octave_matrix();
        // band 0 spans about 134-168 Hz, nearest bins 7 and 9 at 19.53 Hz per bin
        let first: Vec<usize> = (0..257).filter(|&k| obm[[0, k]] == 1.0).collect();
        assert_eq!(first, vec![7, 8]);
        for band in 0..BANDS {
            assert!(obm.row(band).sum() >= 1.0);
        }
        assert!(obm.row(BANDS - 1).iter().rposition(|&v| v == 1.0).unwrap() < 257);
    }

    #[test]
    fn window_is_symmetric_and_nonzero() {
        let w = window();
        assert_eq!(w.len(), FRAME);
        assert!(w[0] > 0.0);
        for i in 0..FRAME {
            assert!((w[i] - w[FRAME - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_short_and_mismatched() {
        let x = vec![0.1; 8000];
        assert!(stoi(&x, &x, 16_000).is_err());
        assert!(stoi(&x[..100], &x, 16_000).is_err());
    }
}
