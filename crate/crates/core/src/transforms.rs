//! Signal transformations shared by both separation cores.
//!
//! Frames are raw (rectangular-window) sample blocks. With a 75 % overlap the
//! rectangular window satisfies the constant-overlap-add condition, so
//! [`overlap_add`] only has to rescale by `hop / frame_len`.
//!
//! Two analysis/synthesis pairs live here:
//!
//! * the real FFT ([`rfft`] / [`irfft`]) with magnitude masking on the noisy
//!   phase ([`apply_spectral_mask`]);
//! * a learned basis ([`BasisPair`]) where a frame is projected onto `N`
//!   analysis vectors, masked, and mapped back with `N` synthesis vectors.
//!
//! The `*_rows` variants process a whole `frames x samples` matrix and are
//! what the model uses; the single-frame functions are thin wrappers.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// 32 ms at 16 kHz.
pub const FRAME_LEN: usize = 512;
/// 8 ms at 16 kHz.
pub const HOP: usize = 128;
/// Bins of a real FFT of [`FRAME_LEN`] samples.
pub const NUM_BINS: usize = FRAME_LEN / 2 + 1;

/// Mono PCM audio at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(sample_rate));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Number of complete frames in a signal of `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Length of the overlap-add output of `frames` frames.
pub fn ola_len(frames: usize, frame_len: usize, hop: usize) -> usize {
    if frames == 0 {
        0
    } else {
        (frames - 1) * hop + frame_len
    }
}

/// Splits a signal into overlapping frames, one per row. Frame `k` covers
/// samples `[k * hop, k * hop + frame_len)`; a trailing partial frame is
/// dropped.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<Array2<f64>> {
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidArgument(
            "frame length and hop must be positive".into(),
        ));
    }
    if samples.len() < frame_len {
        return Err(Error::InputTooShort {
            len: samples.len(),
            frame_len,
        });
    }
    let count = frame_count(samples.len(), frame_len, hop);
    let mut frames = Array2::zeros((count, frame_len));
    for (k, mut row) in frames.axis_iter_mut(Axis(0)).enumerate() {
        let start = k * hop;
        row.as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(&samples[start..start + frame_len]);
    }
    Ok(frames)
}

/// Overlap-adds frames at `hop` spacing, scaled by `hop / frame_len`.
pub fn overlap_add(frames: ArrayView2<'_, f64>, hop: usize) -> Result<Vec<f64>> {
    let (count, frame_len) = frames.dim();
    if count == 0 {
        return Err(Error::EmptyFrames);
    }
    check_hop(frame_len, hop)?;
    let scale = hop as f64 / frame_len as f64;
    let mut out = vec![0.0; ola_len(count, frame_len, hop)];
    for (k, row) in frames.axis_iter(Axis(0)).enumerate() {
        let dst = &mut out[k * hop..k * hop + frame_len];
        for (o, &v) in dst.iter_mut().zip(row.iter()) {
            *o += scale * v;
        }
    }
    Ok(out)
}

/// Adjoint of [`overlap_add`]: maps a gradient on the output signal back to
/// a gradient on each frame.
pub fn overlap_add_adjoint(
    grad: &[f64],
    frames: usize,
    frame_len: usize,
    hop: usize,
) -> Result<Array2<f64>> {
    check_hop(frame_len, hop)?;
    let expected = ola_len(frames, frame_len, hop);
    if grad.len() != expected {
        return Err(Error::shape("overlap-add gradient", expected, grad.len()));
    }
    let scale = hop as f64 / frame_len as f64;
    let mut out = Array2::zeros((frames, frame_len));
    for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let src = &grad[k * hop..k * hop + frame_len];
        for (o, &g) in row.iter_mut().zip(src) {
            *o = scale * g;
        }
    }
    Ok(out)
}

fn check_hop(frame_len: usize, hop: usize) -> Result<()> {
    if hop == 0 || frame_len == 0 || !frame_len.is_multiple_of(hop) {
        return Err(Error::InvalidArgument(format!(
            "hop {hop} must divide frame length {frame_len}"
        )));
    }
    Ok(())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn check_even(len: usize) {
    assert!(
        len >= 2 && len.is_multiple_of(2),
        "real FFT needs an even frame length, got {len}"
    );
}

/// DFT of a real frame: `bins[f] = sum_n frame[n] e^{-j 2 pi f n / L}` for
/// `f = 0..=L/2`.
///
/// Panics if the frame length is odd or zero.
pub fn rfft(frame: &[f64]) -> Vec<Complex64> {
    let frames = ArrayView2::from_shape((1, frame.len()), frame).expect("row view");
    rfft_rows(frames).into_raw_vec_and_offset().0
}

/// Inverse of [`rfft`]. The imaginary parts of the DC and Nyquist bins are
/// ignored.
///
/// Panics if fewer than two bins are given.
pub fn irfft(bins: &[Complex64]) -> Vec<f64> {
    let spectra = ArrayView2::from_shape((1, bins.len()), bins).expect("row view");
    irfft_rows(spectra).into_raw_vec_and_offset().0
}

/// Row-wise [`rfft`].
pub fn rfft_rows(frames: ArrayView2<'_, f64>) -> Array2<Complex64> {
    let (count, n) = frames.dim();
    check_even(n);
    let bins = n / 2 + 1;
    let fft = plan(n, false);
    let mut buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut out = Array2::zeros((count, bins));
    for (src, mut dst) in frames.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        for (b, &x) in buf.iter_mut().zip(src.iter()) {
            *b = Complex64::new(x, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (d, b) in dst.iter_mut().zip(&buf[..bins]) {
            *d = *b;
        }
    }
    out
}

/// Row-wise [`irfft`].
pub fn irfft_rows(spectra: ArrayView2<'_, Complex64>) -> Array2<f64> {
    let (count, bins) = spectra.dim();
    assert!(bins >= 2, "inverse real FFT needs at least two bins");
    let n = 2 * (bins - 1);
    let fft = plan(n, true);
    let mut buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;
    let mut out = Array2::zeros((count, n));
    for (src, mut dst) in spectra.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        buf[0] = Complex64::new(src[0].re, 0.0);
        buf[n / 2] = Complex64::new(src[bins - 1].re, 0.0);
        for f in 1..bins - 1 {
            buf[f] = src[f];
            buf[n - f] = src[f].conj();
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re * scale;
        }
    }
    out
}

/// Adjoint of [`rfft_rows`] with the complex gradient read as
/// `dL/dRe + j dL/dIm`.
pub fn rfft_rows_adjoint(grad: ArrayView2<'_, Complex64>) -> Array2<f64> {
    let (_, bins) = grad.dim();
    let n = 2 * (bins - 1);
    let mut z = grad.to_owned();
    for mut row in z.axis_iter_mut(Axis(0)) {
        row[0] = Complex64::new(2.0 * row[0].re, 0.0);
        row[bins - 1] = Complex64::new(2.0 * row[bins - 1].re, 0.0);
    }
    let mut out = irfft_rows(z.view());
    out *= n as f64 / 2.0;
    out
}

/// Adjoint of [`irfft_rows`].
pub fn irfft_rows_adjoint(grad: ArrayView2<'_, f64>) -> Array2<Complex64> {
    let n = grad.ncols();
    let mut out = rfft_rows(grad);
    let bins = out.ncols();
    let edge = 1.0 / n as f64;
    let inner = 2.0 / n as f64;
    for mut row in out.axis_iter_mut(Axis(0)) {
        for (f, v) in row.iter_mut().enumerate() {
            if f == 0 || f == bins - 1 {
                *v = Complex64::new(v.re * edge, 0.0);
            } else {
                *v *= inner;
            }
        }
    }
    out
}

/// Magnitude and phase of one spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MagPhase {
    pub magnitude: Vec<f64>,
    /// Radians in `(-pi, pi]`.
    pub phase: Vec<f64>,
}

/// Splits a spectrum into magnitude and phase; `arg(0)` is taken as 0.
pub fn mag_phase(bins: &[Complex64]) -> MagPhase {
    let magnitude = bins.iter().map(|b| b.norm()).collect();
    let phase = bins
        .iter()
        .map(|b| {
            if b.re == 0.0 && b.im == 0.0 {
                0.0
            } else {
                let p = b.im.atan2(b.re);
                if p == -std::f64::consts::PI {
                    std::f64::consts::PI
                } else {
                    p
                }
            }
        })
        .collect();
    MagPhase { magnitude, phase }
}

pub(crate) fn check_mask(mask: &[f64]) -> Result<()> {
    match mask
        .iter()
        .enumerate()
        .find(|(_, &m)| !(0.0..=1.0).contains(&m))
    {
        Some((index, &value)) => Err(Error::MaskOutOfRange { index, value }),
        None => Ok(()),
    }
}

/// Scales the magnitude by `mask`, recombines it with the stored phase and
/// returns the time-domain frame. No overlap-add happens here.
pub fn apply_spectral_mask(mag_phase: &MagPhase, mask: &[f64]) -> Result<Vec<f64>> {
    let bins = mag_phase.magnitude.len();
    if mask.len() != bins || mag_phase.phase.len() != bins {
        return Err(Error::shape("spectral mask", bins, mask.len()));
    }
    check_mask(mask)?;
    let spectrum: Vec<Complex64> = mag_phase
        .magnitude
        .iter()
        .zip(&mag_phase.phase)
        .zip(mask)
        .map(|((&m, &p), &g)| Complex64::from_polar(g * m, p))
        .collect();
    Ok(irfft(&spectrum))
}

/// Learned analysis (`N x L`) and synthesis (`N x L`) basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair {
    pub analysis: Array2<f64>,
    pub synthesis: Array2<f64>,
}

impl BasisPair {
    pub fn new(analysis: Array2<f64>, synthesis: Array2<f64>) -> Result<Self> {
        if analysis.dim() != synthesis.dim() {
            return Err(Error::shape(
                "basis pair",
                format!("{:?}", analysis.dim()),
                format!("{:?}", synthesis.dim()),
            ));
        }
        if analysis
            .iter()
            .chain(synthesis.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("basis"));
        }
        Ok(Self {
            analysis,
            synthesis,
        })
    }

    pub fn feature_size(&self) -> usize {
        self.analysis.nrows()
    }

    pub fn frame_len(&self) -> usize {
        self.analysis.ncols()
    }
}

/// `U * frame`.
pub fn analysis_basis(frame: &[f64], basis: &BasisPair) -> Result<Vec<f64>> {
    if frame.len() != basis.frame_len() {
        return Err(Error::shape(
            "analysis basis input",
            basis.frame_len(),
            frame.len(),
        ));
    }
    let frames = ArrayView2::from_shape((1, frame.len()), frame).expect("row view");
    Ok(analysis_rows(frames, basis.analysis.view())
        .into_raw_vec_and_offset()
        .0)
}

/// Elementwise product of features and mask.
pub fn apply_feature_mask(features: &[f64], mask: &[f64]) -> Result<Vec<f64>> {
    if features.len() != mask.len() {
        return Err(Error::shape("feature mask", features.len(), mask.len()));
    }
    Ok(features.iter().zip(mask).map(|(w, m)| w * m).collect())
}

/// `V^T * features`.
pub fn synthesis_basis(features: &[f64], basis: &BasisPair) -> Result<Vec<f64>> {
    if features.len() != basis.feature_size() {
        return Err(Error::shape(
            "synthesis basis input",
            basis.feature_size(),
            features.len(),
        ));
    }
    let rows = ArrayView2::from_shape((1, features.len()), features).expect("row view");
    Ok(synthesis_rows(rows, basis.synthesis.view())
        .into_raw_vec_and_offset()
        .0)
}

/// Row-wise analysis: `frames (K x L) * U^T -> K x N`.
pub fn analysis_rows(frames: ArrayView2<'_, f64>, analysis: ArrayView2<'_, f64>) -> Array2<f64> {
    crate::nn::mul_transposed(frames, analysis)
}

/// Row-wise synthesis: `features (K x N) * V -> K x L`.
pub fn synthesis_rows(
    features: ArrayView2<'_, f64>,
    synthesis: ArrayView2<'_, f64>,
) -> Array2<f64> {
    crate::nn::mul(features, synthesis)
}

/// Backward pass of [`analysis_rows`]. Accumulates into `grad_analysis` and
/// returns the gradient w.r.t. the frames.
pub fn analysis_rows_backward(
    frames: ArrayView2<'_, f64>,
    analysis: ArrayView2<'_, f64>,
    grad_features: ArrayView2<'_, f64>,
    mut grad_analysis: ArrayViewMut2<'_, f64>,
) -> Array2<f64> {
    grad_analysis += &grad_features.t().dot(&frames);
    grad_features.dot(&analysis)
}

/// Backward pass of [`synthesis_rows`]. Accumulates into `grad_synthesis`
/// and returns the gradient w.r.t. the features.
pub fn synthesis_rows_backward(
    features: ArrayView2<'_, f64>,
    synthesis: ArrayView2<'_, f64>,
    grad_frames: ArrayView2<'_, f64>,
    mut grad_synthesis: ArrayViewMut2<'_, f64>,
) -> Array2<f64> {
    grad_synthesis += &features.t().dot(&grad_frames);
    grad_frames.dot(&synthesis.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn framing_index_arithmetic() {
        let signal: Vec<f64> = (0..1024).map(|i| i as f64).collect();
        let frames = frame_signal(&signal, 512, 128).unwrap();
        assert_eq!(frames.nrows(), 5);
        assert_eq!(frames[[1, 0]], 128.0);

        let one = frame_signal(&signal[..512], 512, 128).unwrap();
        assert_eq!(one.nrows(), 1);
        assert_eq!(one.row(0).to_vec(), signal[..512].to_vec());

        let two = frame_signal(&signal[..640], 512, 128).unwrap();
        assert_eq!(two.nrows(), 2);
        assert_eq!(two[[1, 511]], 639.0);
        assert_eq!(two[[0, 511]], 511.0);
    }

    #[test]
    fn framing_rejects_short_input() {
        let err = frame_signal(&[0.0; 100], 512, 128).unwrap_err();
        assert!(err.to_string().contains("input shorter than one frame"));
    }

    #[test]
    fn overlap_add_scaling() {
        let frames = Array2::ones((1, 512));
        let out = overlap_add(frames.view(), 128).unwrap();
        assert_eq!(out.len(), 512);
        assert!(out.iter().all(|&v| v == 0.25));

        let frames = frame_signal(&vec![1.0; 1024], 512, 128).unwrap();
        let out = overlap_add(frames.view(), 128).unwrap();
        assert_eq!(out.len(), 1024);
        for &v in &out[384..640] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn overlap_add_errors() {
        let empty = Array2::<f64>::zeros((0, 512));
        assert!(matches!(
            overlap_add(empty.view(), 128),
            Err(Error::EmptyFrames)
        ));
        let frames = Array2::<f64>::zeros((2, 512));
        assert!(overlap_add(frames.view(), 100).is_err());
    }

    #[test]
    fn cola_reproduces_interior() {
        let signal = random_signal(4000, 1);
        let frames = frame_signal(&signal, 512, 128).unwrap();
        let out = overlap_add(frames.view(), 128).unwrap();
        let end = out.len() - (512 - 128);
        assert!(max_abs_diff(&out[384..end], &signal[384..end]) <= 1e-12);
    }

    #[test]
    fn rfft_examples() {
        assert!(rfft(&[0.0; 512]).iter().all(|b| b.norm() == 0.0));

        let mut impulse = vec![0.0; 512];
        impulse[0] = 1.0;
        for b in rfft(&impulse) {
            assert_eq!(b, Complex64::new(1.0, 0.0));
        }

        let cosine: Vec<f64> = (0..512)
            .map(|n| (2.0 * std::f64::consts::PI * 4.0 * n as f64 / 512.0).cos())
            .collect();
        let bins = rfft(&cosine);
        assert_eq!(bins.len(), 257);
        for (f, b) in bins.iter().enumerate() {
            let expected = if f == 4 { 256.0 } else { 0.0 };
            assert_abs_diff_eq!(b.re, expected, epsilon = 1e-9);
            assert_abs_diff_eq!(b.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn irfft_examples() {
        assert!(irfft(&[Complex64::default(); 257])
            .iter()
            .all(|&v| v == 0.0));

        let mut dc = vec![Complex64::default(); 257];
        dc[0] = Complex64::new(512.0, 0.0);
        for v in irfft(&dc) {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }

        let x = random_signal(512, 2);
        assert!(max_abs_diff(&irfft(&rfft(&x)), &x) < 1e-10);
    }

    #[test]
    fn mag_phase_examples() {
        let mp = mag_phase(&[
            Complex64::new(3.0, 4.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(-1.0, -0.0),
        ]);
        assert_abs_diff_eq!(mp.magnitude[0], 5.0);
        assert_abs_diff_eq!(mp.phase[0], 4f64.atan2(3.0));
        assert_abs_diff_eq!(mp.phase[0], 0.9273, epsilon = 1e-4);
        assert_eq!((mp.magnitude[1], mp.phase[1]), (0.0, 0.0));
        assert_eq!(mp.magnitude[2], 1.0);
        assert_eq!(mp.phase[2], std::f64::consts::PI);
        assert_eq!(mp.phase[3], std::f64::consts::PI);
    }

    #[test]
    fn spectral_mask_examples() {
        let x = random_signal(512, 3);
        let mp = mag_phase(&rfft(&x));
        let out = apply_spectral_mask(&mp, &[1.0; 257]).unwrap();
        assert!(max_abs_diff(&out, &irfft(&rfft(&x))) < 1e-10);

        let out = apply_spectral_mask(&mp, &[0.0; 257]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        let cosine: Vec<f64> = (0..512)
            .map(|n| (2.0 * std::f64::consts::PI * 4.0 * n as f64 / 512.0).cos())
            .collect();
        let mut indicator = vec![0.0; 257];
        indicator[4] = 1.0;
        let out = apply_spectral_mask(&mag_phase(&rfft(&cosine)), &indicator).unwrap();
        assert!(max_abs_diff(&out, &cosine) < 1e-9);
    }

    #[test]
    fn spectral_mask_rejects_out_of_range() {
        let mp = mag_phase(&rfft(&[0.5; 512]));
        let mut mask = vec![0.5; 257];
        mask[7] = 1.5;
        assert!(matches!(
            apply_spectral_mask(&mp, &mask),
            Err(Error::MaskOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn basis_examples() {
        let identity = BasisPair::new(Array2::eye(4), Array2::eye(4)).unwrap();
        let frame = [0.1, -0.2, 0.3, 0.4];
        assert_eq!(analysis_basis(&frame, &identity).unwrap(), frame.to_vec());
        assert_eq!(synthesis_basis(&frame, &identity).unwrap(), frame.to_vec());
        assert_eq!(analysis_basis(&[0.0; 4], &identity).unwrap(), vec![0.0; 4]);
        assert_eq!(synthesis_basis(&[0.0; 4], &identity).unwrap(), vec![0.0; 4]);

        let tiny = BasisPair::new(array![[1.0, 1.0]], array![[1.0, -1.0]]).unwrap();
        assert_eq!(analysis_basis(&[0.5, -0.5], &tiny).unwrap(), vec![0.0]);
        assert_eq!(synthesis_basis(&[2.0], &tiny).unwrap(), vec![2.0, -2.0]);

        assert!(analysis_basis(&[1.0; 3], &tiny).is_err());
        assert!(synthesis_basis(&[1.0; 2], &tiny).is_err());
    }

    #[test]
    fn feature_mask_examples() {
        assert_eq!(
            apply_feature_mask(&[2.0, -3.0], &[1.0, 1.0]).unwrap(),
            vec![2.0, -3.0]
        );
        assert_eq!(
            apply_feature_mask(&[2.0, -3.0], &[0.0, 0.0]).unwrap(),
            vec![0.0, -0.0]
        );
        assert_eq!(
            apply_feature_mask(&[2.0, -3.0], &[0.5, 1.0]).unwrap(),
            vec![1.0, -3.0]
        );
        assert!(apply_feature_mask(&[2.0], &[0.5, 1.0]).is_err());
    }

    #[test]
    fn audio_buffer_invariants() {
        assert!(AudioBuffer::new(vec![0.0; 10], 44_100).is_err());
        assert!(AudioBuffer::from_samples(vec![f64::NAN]).is_err());
        assert_eq!(
            AudioBuffer::from_samples(vec![0.0; 8000])
                .unwrap()
                .duration_secs(),
            0.5
        );
    }
}
