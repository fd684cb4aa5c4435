use serde::{Deserialize, Serialize};

use crate::encoder::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Vec<f64>> = params.into_iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One bias-corrected Adam update of `params` (same order as at creation).
    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: Vec<&Tensor>, cfg: &AdamConfig) {
        assert_eq!(
            params.len(),
            self.m.len(),
            "parameter list does not match optimizer state"
        );
        assert_eq!(
            grads.len(),
            self.m.len(),
            "gradient list does not match optimizer state"
        );
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), g.len());
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}
