use serde::{Deserialize, Serialize};

use super::network::ParamSet;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let n = params.num_params();
        Self {
            config,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One descent step `θ ← θ - lr · m̂ / (sqrt(v̂) + ε)`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        if params.architecture() != grads.architecture() || params.num_params() != self.m.len() {
            return Err(invalid("adam: parameter/gradient/moment shapes differ"));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut k = 0;
        for (pl, gl) in params.layers_mut().iter_mut().zip(grads.layers()) {
            for (pt, gt) in [(&mut pl.weight, &gl.weight), (&mut pl.bias, &gl.bias)] {
                for (p, &g) in pt.as_mut_slice().iter_mut().zip(gt.as_slice()) {
                    let m = &mut self.m[k];
                    let v = &mut self.v[k];
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    k += 1;
                }
            }
        }
        Ok(())
    }
}
