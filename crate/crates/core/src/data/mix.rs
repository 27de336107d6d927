use rand::Rng;

use crate::error::{Error, Result};
use crate::transforms::AudioBuffer;

/// Peak level that no emitted mixture or reference exceeds.
pub const PEAK_LIMIT: f64 = 0.99;

/// An aligned mixture/reference pair.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: AudioBuffer,
    pub reference: AudioBuffer,
    /// Gain applied to the noise crop before summation.
    pub noise_gain: f64,
    /// Joint scale applied to both signals for clipping avoidance (1 if none).
    pub peak_scale: f64,
    /// Start of the noise crop.
    pub noise_offset: usize,
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// `sqrt(P_speech / (P_noise 10^(snr/10)))`.
pub fn noise_gain(speech_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (speech_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixes speech with a crop of `noise` (random offset from `rng`) at
/// `snr_db`, measured over the whole segment. If either output would peak
/// above [`PEAK_LIMIT`], mixture and reference are scaled down together.
pub fn mix_at_snr<R: Rng + ?Sized>(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    rng: &mut R,
) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr {snr_db} dB")));
    }
    let n = speech.len();
    if noise.len() < n {
        return Err(Error::InvalidArgument(format!(
            "noise ({} samples) shorter than speech ({n} samples)",
            noise.len()
        )));
    }
    let offset = rng.random_range(0..=noise.len() - n);
    mix_at_offset(speech, noise, snr_db, offset)
}

pub(crate) fn mix_at_offset(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    offset: usize,
) -> Result<Mixture> {
    let s = speech.samples();
    let crop = &noise.samples()[offset..offset + s.len()];
    let ps = power(s);
    if ps == 0.0 {
        return Err(Error::SilentSignal("speech"));
    }
    let pn = power(crop);
    if pn == 0.0 {
        return Err(Error::SilentSignal("noise"));
    }
    let g = noise_gain(ps, pn, snr_db);
    let mut mixture: Vec<f64> = s.iter().zip(crop).map(|(a, b)| a + g * b).collect();
    let mut reference = s.to_vec();
    let peak = mixture
        .iter()
        .chain(&reference)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let peak_scale = if peak > PEAK_LIMIT {
        PEAK_LIMIT / peak
    } else {
        1.0
    };
    if peak_scale != 1.0 {
        mixture.iter_mut().for_each(|v| *v *= peak_scale);
        reference.iter_mut().for_each(|v| *v *= peak_scale);
    }
    Ok(Mixture {
        mixture: AudioBuffer::new(mixture, speech.sample_rate())?,
        reference: AudioBuffer::new(reference, speech.sample_rate())?,
        noise_gain: g,
        peak_scale,
        noise_offset: offset,
    })
}
