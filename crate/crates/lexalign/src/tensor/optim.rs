//! AdamW: Adam with decoupled weight decay.

use super::params::Params;
use super::{Real, Tensor};
use std::collections::BTreeMap;

/// One bias-corrected AdamW update on a single tensor.
///
/// Decay is decoupled: it scales the parameter directly and is applied even
/// when the gradient is zero.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
    step: u64,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    weight_decay: f64,
) {
    debug_assert_eq!(param.shape(), grad.shape());
    let (b1, b2) = (T::from64(betas.0), T::from64(betas.1));
    let one = T::one();
    let corr1 = T::from64(1.0 - betas.0.powi(step as i32));
    let corr2 = T::from64(1.0 - betas.1.powi(step as i32));
    let lr_t = T::from64(lr);
    let eps_t = T::from64(eps);
    let decay = T::from64(lr * weight_decay);
    for i in 0..param.numel() {
        let g = grad.data()[i];
        let mi = b1 * m.data()[i] + (one - b1) * g;
        let vi = b2 * v.data()[i] + (one - b2) * g * g;
        m.data_mut()[i] = mi;
        v.data_mut()[i] = vi;
        let m_hat = mi / corr1;
        let v_hat = vi / corr2;
        let p = param.data()[i];
        param.data_mut()[i] = p - lr_t * m_hat / (v_hat.sqrt() + eps_t) - decay * p;
    }
}

/// AdamW over a named parameter set. Only parameters present in the gradient
/// map are touched; anything the loss never reached stays bitwise identical.
pub struct AdamW<T> {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Real> AdamW<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &BTreeMap<String, Tensor<T>>) {
        self.step += 1;
        for (name, grad) in grads {
            let param = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(grad.shape()), Tensor::zeros(grad.shape())));
            adamw_step(
                param,
                grad,
                m,
                v,
                self.step,
                self.lr,
                self.betas,
                self.eps,
                self.weight_decay,
            );
        }
    }

    /// Moment tensors for checkpointing, prefixed `optim.m.` / `optim.v.`.
    pub fn export_state(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (name, (m, v)) in &self.moments {
            out.push((format!("optim.m.{name}"), m.clone()));
            out.push((format!("optim.v.{name}"), v.clone()));
        }
        out
    }

    pub fn restore_state(&mut self, step: u64, entries: &[(String, Tensor<T>)]) {
        self.step = step;
        for (name, t) in entries {
            if let Some(rest) = name.strip_prefix("optim.m.") {
                self.moments
                    .entry(rest.to_string())
                    .or_insert_with(|| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())))
                    .0 = t.clone();
            } else if let Some(rest) = name.strip_prefix("optim.v.") {
                self.moments
                    .entry(rest.to_string())
                    .or_insert_with(|| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())))
                    .1 = t.clone();
            }
        }
    }
}
