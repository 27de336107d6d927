//! Numeric layers with hand-written backward passes, parameter
//! initialization and the optimizer. Everything trains in `f64`.

mod dense;
mod dropout;
mod init;
mod lstm;
mod norm;
mod optim;
mod tensor;

pub use dense::{dense_backward, dense_forward, Activation, DenseGrads, DenseParams};
pub use dropout::{dropout, DropoutMask};
pub use init::{glorot_limit, init_tensors, InitKind, TensorSpec};
pub use lstm::{
    lstm_backward, lstm_forward, lstm_forward_cached, lstm_step, LstmCache, LstmGrads, LstmParams,
    LstmState,
};
pub use norm::{
    instant_layer_norm, instant_layer_norm_backward, IlnCache, IlnGrads, IlnParams, ILN_EPS,
};
pub use optim::{adam_step, clip_grad_norm, Adam, AdamMoments};
pub use tensor::{GradientSet, Tensor};

use ndarray::{Array1, Array2, ArrayView2, Axis};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in chunks_a.zip(chunks_b) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `x * w^T`. A single row (the streaming path) runs as a matrix-vector
/// product, which avoids packing `w` for a one-row GEMM.
pub(crate) fn mul_transposed(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    if x.nrows() == 1 && w.ncols() > 0 && x.ncols() == w.ncols() {
        if let (Some(xs), Some(ws)) = (x.row(0).to_slice(), w.to_slice()) {
            let y: Vec<f64> = ws.chunks_exact(w.ncols()).map(|row| dot(row, xs)).collect();
            return Array2::from_shape_vec((1, w.nrows()), y).expect("one row");
        }
    }
    x.dot(&w.t())
}

/// `x * w`, with the same single-row shortcut.
pub(crate) fn mul(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    if x.nrows() != 1 || !w.is_standard_layout() {
        return x.dot(&w);
    }
    let mut y = Array1::zeros(w.ncols());
    for (&a, row) in x.row(0).iter().zip(w.rows()) {
        y.scaled_add(a, &row);
    }
    y.insert_axis(Axis(0))
}
