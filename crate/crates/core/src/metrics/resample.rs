//! Rational-factor polyphase resampling with a Kaiser-windowed sinc filter.

use crate::error::{Error, Result};

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Low-pass filter for an `up/down` conversion: 60 dB stop band, transition
/// width a tenth of the cutoff, normalized to unit DC gain. Returns the taps
/// and the half length.
fn design_filter(up: u32, down: u32) -> (Vec<f64>, usize) {
    let cutoff = 1.0 / (2.0 * up.max(down) as f64);
    let roll = cutoff / 10.0;
    let half = ((60.0 - 8.0) / (28.714 * roll)).ceil() as usize;
    let beta = 0.1102 * (60.0 - 8.7);
    let m = 2 * half + 1;
    let i0_beta = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..m)
        .map(|n| {
            let t = n as f64 - half as f64;
            let r = 2.0 * n as f64 / (m - 1) as f64 - 1.0;
            let window = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            window * 2.0 * up as f64 * cutoff * sinc(2.0 * cutoff * t)
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= sum);
    (taps, half)
}

/// Resamples `x` from `from_rate` to `to_rate` Hz. The output has
/// `ceil(len * up / down)` samples, where `up/down` is the reduced rate ratio,
/// and is aligned with the input (zero group delay).
pub fn resample_poly(x: &[f64], from_rate: u32, to_rate: u32) -> Result<Vec<f64>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(Error::InvalidArgument(
            "sample rates must be positive".into(),
        ));
    }
    let g = gcd(from_rate, to_rate);
    let (up, down) = ((to_rate / g) as usize, (from_rate / g) as usize);
    if up == 1 && down == 1 {
        return Ok(x.to_vec());
    }
    let (taps, half) = design_filter(up as u32, down as u32);
    let n_out = (x.len() * up).div_ceil(down);
    let gain = up as f64;
    let out = (0..n_out)
        .map(|m| {
            // y[m] = up * sum_k x[k] h[m down - k up + half]
            let center = m * down + half;
            let k_min = (center + 1).saturating_sub(taps.len()).div_ceil(up);
            let k_max = (center / up).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            if !x.is_empty() {
                for k in k_min..=k_max {
                    acc += x[k] * taps[center - k * up];
                }
            }
            gain * acc
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }

    #[test]
    fn filter_for_16k_to_10k() {
        let (taps, half) = design_filter(5, 8);
        assert_eq!(half, 290);
        assert_eq!(taps.len(), 581);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..half {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn output_length_and_dc_gain() {
        let x = vec![1.0; 16_000];
        let y = resample_poly(&x, 16_000, 10_000).unwrap();
        assert_eq!(y.len(), 10_000);
        for v in &y[500..9500] {
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
        assert_eq!(resample_poly(&x[..7], 16_000, 10_000).unwrap().len(), 5);
    }

    #[test]
    fn low_tone_survives() {
        let tone = |rate: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate).sin())
                .collect()
        };
        let y = resample_poly(&tone(16_000.0, 16_000), 16_000, 10_000).unwrap();
        let expected = tone(10_000.0, 10_000);
        let err = y[1000..9000]
            .iter()
            .zip(&expected[1000..9000])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "{err}");
    }

    #[test]
    fn identity_rate() {
        let x = [0.1, -0.2, 0.3];
        assert_eq!(resample_poly(&x, 8000, 8000).unwrap(), x.to_vec());
        assert!(resample_poly(&x, 0, 8000).is_err());
    }
}
