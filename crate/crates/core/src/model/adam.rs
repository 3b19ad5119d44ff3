use serde::{Deserialize, Serialize};

use super::{ModelConfig, Params, EMBEDDING_TENSORS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate multiplier applied to the embedding tensors.
    pub embedding_lr_multiplier: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            embedding_lr_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &ModelConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Params::zeros(model),
            v: Params::zeros(model),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((name, _, p), (_, _, g)), (_, _, m)), (_, _, v)) in tensors {
            let lr = if EMBEDDING_TENSORS.contains(&name.as_str()) {
                c.lr * c.embedding_lr_multiplier
            } else {
                c.lr
            };
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}
