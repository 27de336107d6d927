use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use super::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    /// Mask heads: outputs lie in (0, 1).
    Sigmoid,
}

/// Fully connected layer, `y = act(x W^T + b)` applied to every row of `x`.
#[derive(Debug, Clone, Copy)]
pub struct DenseParams<'a> {
    /// `out x in`
    pub weight: ArrayView2<'a, f64>,
    pub bias: ArrayView1<'a, f64>,
}

pub struct DenseGrads<'a> {
    pub weight: ArrayViewMut2<'a, f64>,
    pub bias: ArrayViewMut1<'a, f64>,
}

pub fn dense_forward(
    params: &DenseParams<'_>,
    x: ArrayView2<'_, f64>,
    activation: Activation,
) -> Result<Array2<f64>> {
    if params.bias.len() != params.weight.nrows() {
        return Err(Error::shape(
            "dense bias",
            params.weight.nrows(),
            params.bias.len(),
        ));
    }
    if x.ncols() != params.weight.ncols() {
        return Err(Error::shape(
            "dense input",
            params.weight.ncols(),
            x.ncols(),
        ));
    }
    let mut y = super::mul_transposed(x, params.weight);
    y += &params.bias;
    if activation == Activation::Sigmoid {
        y.mapv_inplace(sigmoid);
    }
    Ok(y)
}

/// Accumulates parameter gradients and returns `dL/dx`. `y` is the forward
/// output.
pub fn dense_backward(
    params: &DenseParams<'_>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    activation: Activation,
    grads: DenseGrads<'_>,
) -> Result<Array2<f64>> {
    if dy.dim() != y.dim() || y.nrows() != x.nrows() || y.ncols() != params.weight.nrows() {
        return Err(Error::shape(
            "dense upstream gradient",
            format!("{:?}", y.dim()),
            format!("{:?}", dy.dim()),
        ));
    }
    let dz = match activation {
        Activation::Linear => dy.to_owned(),
        Activation::Sigmoid => {
            let mut dz = dy.to_owned();
            dz.zip_mut_with(&y, |d, &s| *d *= s * (1.0 - s));
            dz
        }
    };
    let DenseGrads {
        mut weight,
        mut bias,
    } = grads;
    weight += &dz.t().dot(&x);
    bias += &dz.sum_axis(Axis(0));
    Ok(dz.dot(&params.weight))
}
