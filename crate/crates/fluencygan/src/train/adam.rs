//! Adam with bias correction, the warmup learning-rate schedule, and
//! global-norm gradient clipping.

use crate::tensor::Tensor;

/// First/second moment buffers per parameter, in `named_params` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(beta1: f32, beta2: f32, eps: f32, param_sizes: &[usize]) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update over all parameters. `grads[i]` of `None` means no gradient
    /// reached that parameter this step (treated as zero).
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor)],
        grads: &[Option<Vec<f32>>],
        lr: f32,
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((_, param), grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// The warmup-then-decay schedule used for the transformer path:
/// lr = model_dim^-0.5 * min(step^-0.5, step * warmup^-1.5), step >= 1.
pub fn transformer_lr(step: u64, model_dim: usize, warmup_steps: u32) -> f32 {
    debug_assert!(step >= 1);
    let s = step as f64;
    let w = warmup_steps as f64;
    let d = model_dim as f64;
    (d.powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5))) as f32
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Option<Vec<f32>>], max_norm: f32) {
    let mut total = 0.0f64;
    for g in grads.iter().flatten() {
        for &x in g {
            total += (x as f64) * (x as f64);
        }
    }
    let norm = total.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
}
