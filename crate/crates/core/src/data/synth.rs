//! Procedural speech-like and noise sources for building training sets
//! without an external corpus.
//!
//! The speech model is a source-filter vocoder: a glottal pulse train with a
//! drifting pitch contour drives three time-varying formant resonators, and
//! syllables alternate with fricative bursts and pauses. The noise families
//! cover stationary broadband, coloured, modulated, tonal and babble
//! interference.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::wav::write_wav;
use crate::error::{Error, Result};
use crate::transforms::{AudioBuffer, SAMPLE_RATE};

const FS: f64 = SAMPLE_RATE as f64;

/// Vowel formants (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 7] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
    [440.0, 1020.0, 2240.0],
];
const BANDWIDTHS: [f64; 3] = [80.0, 100.0, 140.0];

/// Two-pole resonator with per-sample retuning.
#[derive(Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bandwidth: f64) -> f64 {
        let r = (-PI * bandwidth / FS).exp();
        let b1 = 2.0 * r * (2.0 * PI * freq / FS).cos();
        let b2 = -r * r;
        let y = (1.0 - r) * x + b1 * self.y1 + b2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Speaker {
    f0: f64,
    formant_scale: f64,
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

fn normalize_rms(x: &mut [f64], rms: f64) {
    let r = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / r);
    }
}

/// Raised-cosine fade in and out over `ramp` samples.
fn envelope(n: usize, i: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    let edge = i.min(n - 1 - i);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
    }
}

/// `seconds` of speech-like signal with peak amplitude in `[0.3, 0.6]`.
pub fn synth_speech(seconds: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = (seconds * FS).round() as usize;
    let speaker = Speaker {
        f0: rng.random_range(95.0..230.0),
        formant_scale: rng.random_range(0.9..1.15),
    };
    let mut out = Vec::with_capacity(total + 8000);
    let mut res = [
        Resonator::default(),
        Resonator::default(),
        Resonator::default(),
    ];
    let mut phase = 0.0;
    let mut glottal = 0.0;
    let mut prev_vowel = VOWELS[0];
    let mut t_global = 0usize;
    while out.len() < total {
        let roll: f64 = rng.random();
        if roll < 0.12 {
            let n = (rng.random_range(0.08..0.35) * FS) as usize;
            out.extend(std::iter::repeat_n(0.0, n));
            t_global += n;
            continue;
        }
        if roll < 0.40 {
            // fricative onset: differentiated noise with a random colour
            let n = (rng.random_range(0.04..0.12) * FS) as usize;
            let amp = rng.random_range(0.05..0.25);
            let colour = rng.random_range(0.0..0.9);
            let mut prev = 0.0;
            let mut lp = 0.0;
            for i in 0..n {
                let w: f64 = rng.sample(StandardNormal);
                let hp = w - prev;
                prev = w;
                lp = colour * lp + (1.0 - colour) * hp;
                out.push(amp * lp * envelope(n, i, n / 4));
            }
            t_global += n;
        }
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let n = (rng.random_range(0.10..0.32) * FS) as usize;
        let amp = rng.random_range(0.4..1.0);
        let glide = rng.random_range(-0.25..0.25);
        for i in 0..n {
            let progress = i as f64 / n as f64;
            let t = t_global as f64 / FS;
            let f0 = speaker.f0
                * (1.0 + 0.08 * (2.0 * PI * 0.7 * t).sin() + glide * (progress - 0.5) * 0.4);
            phase += f0 / FS;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            // spectral tilt of the glottal flow plus a little aspiration
            let aspiration: f64 = rng.sample(StandardNormal);
            glottal = 0.96 * glottal + pulse + 0.02 * aspiration;
            let blend = (progress / 0.3).min(1.0);
            let mut y = glottal;
            for (k, r) in res.iter_mut().enumerate() {
                let f =
                    speaker.formant_scale * (prev_vowel[k] + blend * (vowel[k] - prev_vowel[k]));
                y = r.step(y, f, BANDWIDTHS[k]) * 4.0;
            }
            out.push(amp * y * envelope(n, i, (0.025 * FS) as usize));
            t_global += 1;
        }
        prev_vowel = vowel;
    }
    out.truncate(total);
    // remove the resonators' DC build-up
    let mean = out.iter().sum::<f64>() / out.len().max(1) as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    let peak = rng.random_range(0.3..0.6);
    normalize_peak(&mut out, peak);
    out
}

/// Interference families produced by [`synth_noise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Modulated,
    Hum,
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Brown,
        NoiseKind::Modulated,
        NoiseKind::Hum,
        NoiseKind::Babble,
    ];
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Modulated => "modulated",
            NoiseKind::Hum => "hum",
            NoiseKind::Babble => "babble",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown noise kind '{s}'")))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `seconds` of noise of the given kind at an RMS of 0.1.
pub fn synth_noise(kind: NoiseKind, seconds: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * FS).round() as usize;
    let mut out = match kind {
        NoiseKind::White => gaussian(&mut rng, n),
        NoiseKind::Pink => {
            // Kellet's filter, about -3 dB per octave
            let mut b = [0.0f64; 7];
            gaussian(&mut rng, n)
                .into_iter()
                .map(|w| {
                    b[0] = 0.99886 * b[0] + w * 0.0555179;
                    b[1] = 0.99332 * b[1] + w * 0.0750759;
                    b[2] = 0.96900 * b[2] + w * 0.1538520;
                    b[3] = 0.86650 * b[3] + w * 0.3104856;
                    b[4] = 0.55000 * b[4] + w * 0.5329522;
                    b[5] = -0.7616 * b[5] - w * 0.0168980;
                    let y = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
                    b[6] = w * 0.115926;
                    y
                })
                .collect()
        }
        NoiseKind::Brown => {
            let mut acc = 0.0;
            let raw: Vec<f64> = gaussian(&mut rng, n)
                .into_iter()
                .map(|w| {
                    acc = 0.995 * acc + w;
                    acc
                })
                .collect();
            let mean = raw.iter().sum::<f64>() / n.max(1) as f64;
            raw.into_iter().map(|v| v - mean).collect()
        }
        NoiseKind::Modulated => {
            let rate = rng.random_range(0.5..4.0);
            let depth = rng.random_range(0.5..0.95);
            let colour = rng.random_range(0.0..0.8);
            let mut lp = 0.0;
            gaussian(&mut rng, n)
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    lp = colour * lp + (1.0 - colour) * w;
                    let m = 1.0 - depth * (0.5 + 0.5 * (2.0 * PI * rate * i as f64 / FS).sin());
                    lp * m
                })
                .collect()
        }
        NoiseKind::Hum => {
            let base =
                if rng.random_bool(0.5) { 50.0 } else { 60.0 } * rng.random_range(0.98..1.02);
            let amps: Vec<f64> = (1..=12)
                .map(|k| rng.random_range(0.2..1.0) / k as f64)
                .collect();
            let phases: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            gaussian(&mut rng, n)
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    let t = i as f64 / FS;
                    let tone: f64 = (0..12)
                        .map(|k| amps[k] * (2.0 * PI * base * (k + 1) as f64 * t + phases[k]).sin())
                        .sum();
                    tone + 0.05 * w
                })
                .collect()
        }
        NoiseKind::Babble => {
            let talkers = rng.random_range(4..8);
            let mut sum = vec![0.0; n];
            for _ in 0..talkers {
                let voice = synth_speech(seconds, rng.random());
                sum.iter_mut().zip(voice).for_each(|(s, v)| *s += v);
            }
            sum
        }
    };
    normalize_rms(&mut out, 0.1);
    out
}

/// Writes `speech_files` speech files to `dir/speech` and `noise_files`
/// noise files (cycling through [`NoiseKind::ALL`]) to `dir/noise`, each
/// `seconds` long.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    speech_files: usize,
    noise_files: usize,
    seconds: f64,
    seed: u64,
) -> Result<()> {
    let dir = dir.as_ref();
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "seconds must be positive, got {seconds}"
        )));
    }
    let speech_dir = dir.join("speech");
    let noise_dir = dir.join("noise");
    for d in [&speech_dir, &noise_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for i in 0..speech_files {
        let s = synth_speech(seconds, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        write_wav(
            speech_dir.join(format!("speech_{i:04}.wav")),
            &AudioBuffer::from_samples(s)?,
        )?;
    }
    for i in 0..noise_files {
        let kind = NoiseKind::ALL[i % NoiseKind::ALL.len()];
        let s = synth_noise(
            kind,
            seconds,
            seed.wrapping_mul(2_000_003).wrapping_add(i as u64),
        );
        write_wav(
            noise_dir.join(format!("noise_{i:04}_{kind}.wav")),
            &AudioBuffer::from_samples(s)?,
        )?;
    }
    Ok(())
}
