use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// Per-element scale factors applied in the forward pass: `0` for dropped
/// elements, `1 / (1 - rate)` for survivors.
pub type DropoutMask = Array2<f64>;

/// Inverted dropout. In inference mode, or with `rate == 0`, the input is
/// returned unchanged and no mask is drawn.
pub fn dropout<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((x.to_owned(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_simple_fn(x.dim(), || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    });
    Ok((&x * &mask, Some(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inference_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64);
        let (y, mask) = dropout(x.view(), 0.25, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64);
        for training in [true, false] {
            assert_eq!(dropout(x.view(), 0.0, training, &mut rng).unwrap().0, x);
        }
    }

    #[test]
    fn inverted_scaling_preserves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Array2::ones((1000, 1000));
        let (y, _) = dropout(x.view(), 0.25, true, &mut rng).unwrap();
        let mean = y.mean().unwrap();
        assert!((0.995..=1.005).contains(&mean), "mean {mean}");
        let dropped = y.iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((dropped - 0.25).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::ones((1, 1));
        assert!(dropout(x.view(), 1.0, true, &mut rng).is_err());
        assert!(dropout(x.view(), -0.1, true, &mut rng).is_err());
    }
}
