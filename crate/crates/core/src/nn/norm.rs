use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};

use crate::error::{Error, Result};

pub const ILN_EPS: f64 = 1e-7;

/// Instant layer normalization: every frame (row) is normalized over its own
/// features, then scaled by shared `gamma`/`beta`. No statistics are carried
/// across frames, so it works one frame at a time.
#[derive(Debug, Clone, Copy)]
pub struct IlnParams<'a> {
    pub gamma: ArrayView1<'a, f64>,
    pub beta: ArrayView1<'a, f64>,
    pub eps: f64,
}

pub struct IlnGrads<'a> {
    pub gamma: ArrayViewMut1<'a, f64>,
    pub beta: ArrayViewMut1<'a, f64>,
}

#[derive(Debug, Clone)]
pub struct IlnCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl IlnCache {
    /// Pre-affine output `(x - mean) / sqrt(var + eps)`.
    pub fn normalized(&self) -> ArrayView2<'_, f64> {
        self.normalized.view()
    }
}

pub fn instant_layer_norm(
    params: &IlnParams<'_>,
    x: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, IlnCache)> {
    let d = params.gamma.len();
    if params.beta.len() != d || x.ncols() != d {
        return Err(Error::shape("instant layer norm", d, x.ncols()));
    }
    let mut normalized = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d as f64;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
        *s = 1.0 / (var + params.eps).sqrt();
        row *= *s;
    }
    let mut y = &normalized * &params.gamma;
    y += &params.beta;
    Ok((
        y,
        IlnCache {
            normalized,
            inv_std,
        },
    ))
}

pub fn instant_layer_norm_backward(
    params: &IlnParams<'_>,
    cache: &IlnCache,
    dy: ArrayView2<'_, f64>,
    grads: IlnGrads<'_>,
) -> Result<Array2<f64>> {
    if dy.dim() != cache.normalized.dim() {
        return Err(Error::shape(
            "instant layer norm gradient",
            format!("{:?}", cache.normalized.dim()),
            format!("{:?}", dy.dim()),
        ));
    }
    let d = params.gamma.len() as f64;
    let IlnGrads {
        mut gamma,
        mut beta,
    } = grads;
    gamma += &(&dy * &cache.normalized).sum_axis(Axis(0));
    beta += &dy.sum_axis(Axis(0));

    let mut dx = &dy * &params.gamma;
    for ((mut row, xhat), &s) in dx
        .axis_iter_mut(Axis(0))
        .zip(cache.normalized.axis_iter(Axis(0)))
        .zip(&cache.inv_std)
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        row.zip_mut_with(&xhat, |g, &xh| *g = s * (*g - mean_d - xh * mean_dx));
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_close, numeric_grad};
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(d: usize) -> (Array1<f64>, Array1<f64>) {
        (Array1::ones(d), Array1::zeros(d))
    }

    #[test]
    fn constant_frame_normalizes_to_zero() {
        let (g, b) = unit(5);
        let p = IlnParams {
            gamma: g.view(),
            beta: b.view(),
            eps: ILN_EPS,
        };
        let (y, _) = instant_layer_norm(&p, Array2::from_elem((1, 5), 3.7).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_element_example() {
        let (g, b) = unit(2);
        let p = IlnParams {
            gamma: g.view(),
            beta: b.view(),
            eps: ILN_EPS,
        };
        let (y, _) = instant_layer_norm(&p, arr2(&[[1.0, -1.0]]).view()).unwrap();
        let expected = 1.0 / (1.0 + 1e-7f64).sqrt();
        assert_abs_diff_eq!(y[[0, 0]], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(y[[0, 1]], -expected, epsilon = 1e-15);
    }

    #[test]
    fn frames_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((6, 9), |_| rng.random_range(-4.0..4.0));
        let (g, b) = unit(9);
        let p = IlnParams {
            gamma: g.view(),
            beta: b.view(),
            eps: ILN_EPS,
        };
        let (all, cache) = instant_layer_norm(&p, x.view()).unwrap();
        for r in 0..6 {
            let (one, _) = instant_layer_norm(&p, x.slice(ndarray::s![r..r + 1, ..])).unwrap();
            assert_eq!(one.row(0), all.row(r));
            let row = cache.normalized().row(r).to_owned();
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_check() {
        let (rows, d) = (3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut r =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let gamma = Array1::from(r(d));
        let beta = Array1::from(r(d));
        let x = Array2::from_shape_vec((rows, d), r(rows * d)).unwrap();
        let upstream = Array2::from_shape_vec((rows, d), r(rows * d)).unwrap();

        let loss = |g: &Array1<f64>, b: &Array1<f64>, x: &Array2<f64>| {
            let p = IlnParams {
                gamma: g.view(),
                beta: b.view(),
                eps: ILN_EPS,
            };
            (instant_layer_norm(&p, x.view()).unwrap().0 * &upstream).sum()
        };

        let p = IlnParams {
            gamma: gamma.view(),
            beta: beta.view(),
            eps: ILN_EPS,
        };
        let (_, cache) = instant_layer_norm(&p, x.view()).unwrap();
        let mut gg = Array1::zeros(d);
        let mut gb = Array1::zeros(d);
        let dx = instant_layer_norm_backward(
            &p,
            &cache,
            upstream.view(),
            IlnGrads {
                gamma: gg.view_mut(),
                beta: gb.view_mut(),
            },
        )
        .unwrap();

        let mut flat = gamma.to_vec();
        let num: Vec<f64> = (0..d)
            .map(|i| numeric_grad(&mut flat, i, |v| loss(&Array1::from(v.to_vec()), &beta, &x)))
            .collect();
        assert_close(gg.as_slice().unwrap(), &num, "gamma");

        let mut flat = beta.to_vec();
        let num: Vec<f64> = (0..d)
            .map(|i| {
                numeric_grad(&mut flat, i, |v| {
                    loss(&gamma, &Array1::from(v.to_vec()), &x)
                })
            })
            .collect();
        assert_close(gb.as_slice().unwrap(), &num, "beta");

        let mut flat = x.as_slice().unwrap().to_vec();
        let num: Vec<f64> = (0..rows * d)
            .map(|i| {
                numeric_grad(&mut flat, i, |v| {
                    loss(
                        &gamma,
                        &beta,
                        &Array2::from_shape_vec((rows, d), v.to_vec()).unwrap(),
                    )
                })
            })
            .collect();
        assert_close(dx.as_slice().unwrap(), &num, "input");
    }
}
