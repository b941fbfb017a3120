//! Adam with bias-corrected moments.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::mlp::{Gradients, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.99, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NeuralError::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// One Adam update at step `t` (1-based) on a flat parameter slice.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Optimizer state for every tensor of one model.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    t: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl Adam {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let zw: Vec<_> = model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let zb: Vec<_> = model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        Ok(Self { config, t: 0, m_w: zw.clone(), v_w: zw, m_b: zb.clone(), v_b: zb })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.t += 1;
        let t = self.t;
        let cfg = self.config;
        for k in 0..model.weights.len() {
            adam_update(
                model.weights[k].as_slice_mut().expect("standard layout"),
                grads.weights[k].as_standard_layout().as_slice().expect("standard layout"),
                self.m_w[k].as_slice_mut().expect("standard layout"),
                self.v_w[k].as_slice_mut().expect("standard layout"),
                t,
                &cfg,
            );
            adam_update(
                model.biases[k].as_slice_mut().expect("standard layout"),
                grads.biases[k].as_standard_layout().as_slice().expect("standard layout"),
                self.m_b[k].as_slice_mut().expect("standard layout"),
                self.v_b[k].as_slice_mut().expect("standard layout"),
                t,
                &cfg,
            );
        }
        model.step += 1;
    }
}
