use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
///
/// Moment buffers are created lazily on the first step so that one optimizer
/// can be built before the parameter set is final.
#[derive(Clone, Debug)]
pub struct Adam<F: Scalar = f32> {
    config: AdamConfig,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
    steps: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients held in `store`, then zeroes them.
    ///
    /// A non-finite gradient aborts the step before any parameter changes.
    pub fn step(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        if let Some(id) = store.ids().find(|&id| !store.grad(id).all_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", store.name(id))));
        }
        if self.first.len() != store.len() {
            self.first = store.ids().map(|id| Tensor::zeros(store.value(id).shape())).collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let c = &self.config;
        let t = self.steps as i32;
        let b1 = F::from_f64(c.beta1);
        let b2 = F::from_f64(c.beta2);
        let one_b1 = F::from_f64(1.0 - c.beta1);
        let one_b2 = F::from_f64(1.0 - c.beta2);
        let correct1 = F::from_f64(1.0 / (1.0 - c.beta1.powi(t)));
        let correct2 = F::from_f64(1.0 / (1.0 - c.beta2.powi(t)));
        let lr = F::from_f64(c.lr);
        let eps = F::from_f64(c.eps);

        for id in store.ids().collect::<Vec<_>>() {
            let (value, grad) = store.value_and_grad_mut(id);
            let m = self.first[id.index()].data_mut();
            let v = self.second[id.index()].data_mut();
            for (((p, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                let m_hat = *mi * correct1;
                let v_hat = *vi * correct2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}
