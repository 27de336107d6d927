use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform in `±sqrt(6 / (rows + cols))`.
    Glorot,
    Zeros,
    Ones,
}

/// Name, shape and initializer of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

pub fn glorot_limit(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Initializes tensors in order from a single seeded stream.
///
/// Values are rounded to `f32` so that a freshly built model survives the
/// 32-bit weight file bit-exactly.
pub fn init_tensors(specs: &[TensorSpec], seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    specs
        .iter()
        .map(|spec| {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                InitKind::Zeros => vec![0.0; n],
                InitKind::Ones => vec![1.0; n],
                InitKind::Glorot => {
                    assert_eq!(spec.shape.len(), 2, "Glorot init needs a matrix");
                    let limit = glorot_limit(spec.shape[0], spec.shape[1]);
                    (0..n)
                        .map(|_| {
                            let v = rng.random_range(-limit..limit) as f32;
                            // rounding can land exactly on the bound; keep it inside
                            v.clamp(-(limit as f32), limit as f32) as f64
                        })
                        .collect()
                }
            };
            Tensor::new(spec.name.clone(), spec.shape.clone(), data)
        })
        .collect()
}
