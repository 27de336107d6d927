use super::{GradientSet, Tensor};
use crate::error::{Error, Result};

/// Rescales all gradients by `min(1, max_norm / ||g||)` where `||g||` is the
/// global L2 norm over every tensor. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut GradientSet, max_norm: f64) -> Result<f64> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(norm)
}

/// First and second moment estimates, shape-parallel to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamMoments {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [Tensor],
    grads: &GradientSet,
    moments: &mut AdamMoments,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert!(t >= 1, "Adam step counter starts at 1");
    assert_eq!(params.len(), grads.tensors.len());
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut moments.first)
        .zip(&mut moments.second)
    {
        for (((w, &g), m), v) in p
            .data
            .iter_mut()
            .zip(&g.data)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Adam with the conventional defaults (`beta1 = 0.9`, `beta2 = 0.999`,
/// `eps = 1e-8`) and a mutable learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: AdamMoments,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: AdamMoments::zeros_like(params),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &GradientSet) {
        self.step += 1;
        adam_step(
            params,
            grads,
            &mut self.moments,
            self.step,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        );
    }
}
