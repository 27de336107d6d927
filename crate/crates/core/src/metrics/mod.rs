//! Training objectives and evaluation metrics.

mod report;
mod resample;
mod stoi;

pub use report::{FileMetrics, MetricReport};
pub use resample::resample_poly;
pub use stoi::stoi;

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::transforms::{frame_signal, rfft_rows, FRAME_LEN, HOP};

/// Stabilizer inside the SNR ratio.
pub const SNR_EPS: f64 = 1e-8;
/// Mean-square reference power below which a training target counts as silent.
pub const SILENCE_POWER: f64 = 1e-10;
/// SI-SNR values are clamped to `±SI_SNR_CAP` dB.
pub const SI_SNR_CAP: f64 = 60.0;

fn check_lengths(estimate: &[f64], reference: &[f64]) -> Result<()> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(
            "metric inputs",
            reference.len(),
            estimate.len(),
        ));
    }
    Ok(())
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Scale-sensitive negative SNR in dB:
/// `-10 log10((sum ref^2 + eps) / (sum (ref - est)^2 + eps))`.
///
/// A reference whose mean-square power is below [`SILENCE_POWER`] yields
/// [`Error::SilentTarget`], which the trainer treats as "skip this sample".
pub fn neg_snr_loss(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    neg_snr_loss_with_grad(estimate, reference).map(|(l, _)| l)
}

/// [`neg_snr_loss`] and its gradient w.r.t. `estimate`.
pub fn neg_snr_loss_with_grad(estimate: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(estimate, reference)?;
    if reference.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let signal = energy(reference);
    let power = signal / reference.len() as f64;
    if power < SILENCE_POWER {
        return Err(Error::SilentTarget { power });
    }
    let error: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (r - e) * (r - e))
        .sum();
    let loss = -10.0 * ((signal + SNR_EPS) / (error + SNR_EPS)).log10();
    // d/d est of 10 log10(err + eps) = 10 / ln 10 * 2 (est - ref) / (err + eps)
    let scale = 20.0 / (std::f64::consts::LN_10 * (error + SNR_EPS));
    let grad = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| scale * (e - r))
        .collect();
    Ok((loss, grad))
}

/// Scale-invariant SNR (used as SI-SDR) in dB, clamped to `±60`. Both
/// signals are made zero-mean first.
pub fn si_snr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    if reference.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let n = reference.len() as f64;
    let est_mean = estimate.iter().sum::<f64>() / n;
    let ref_mean = reference.iter().sum::<f64>() / n;
    let est: Vec<f64> = estimate.iter().map(|v| v - est_mean).collect();
    let refz: Vec<f64> = reference.iter().map(|v| v - ref_mean).collect();
    let ref_energy = energy(&refz);
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = est.iter().zip(&refz).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let residual: f64 = est
        .iter()
        .zip(&refz)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    let db = if residual == 0.0 {
        SI_SNR_CAP
    } else if target_energy == 0.0 {
        -SI_SNR_CAP
    } else {
        10.0 * (target_energy / residual).log10()
    };
    Ok(db.clamp(-SI_SNR_CAP, SI_SNR_CAP))
}

/// Alias of [`si_snr`] under its evaluation-metric name.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    si_snr(estimate, reference)
}

/// Mean over frames and bins of `(|STFT(est)| - |STFT(ref)|)^2`, with the
/// model's framing. Phase-blind by construction.
pub fn magnitude_mse_loss(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let est = rfft_rows(frame_signal(estimate, FRAME_LEN, HOP)?.view());
    let refs = rfft_rows(frame_signal(reference, FRAME_LEN, HOP)?.view());
    let mut sum = 0.0;
    Zip::from(&est).and(&refs).for_each(|a, b| {
        let d = a.norm() - b.norm();
        sum += d * d;
    });
    Ok(sum / est.len() as f64)
}
