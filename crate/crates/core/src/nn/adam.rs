use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, Gradients};
use crate::{Error, Result};

/// Adam hyperparameters other than the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self { config, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn for_network(net: &Denoiser<f32>) -> Self {
        Self::new(net.num_params(), AdamConfig::default())
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step_slice(&mut self, params: &mut [f32], grads: &[f32], lr: f64) -> Result<()> {
        Error::check_len("adam parameters", self.m.len(), params.len())?;
        Error::check_len("adam gradients", self.m.len(), grads.len())?;
        self.update(params.iter_mut(), grads.iter().copied(), lr);
        Ok(())
    }

    /// Updates every parameter of `net` from `grads`.
    pub fn step_network(&mut self, net: &mut Denoiser<f32>, grads: &Gradients<f32>, lr: f64) -> Result<()> {
        Error::check_len("adam parameters", self.m.len(), net.num_params())?;
        Error::check_len("adam gradients", self.m.len(), grads.values().count())?;
        let g: Vec<f32> = grads.values().copied().collect();
        self.update(net.params_mut(), g.into_iter(), lr);
        Ok(())
    }

    fn update<'a>(&mut self, params: impl Iterator<Item = &'a mut f32>, grads: impl Iterator<Item = f32>, lr: f64) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let corr1 = 1.0 - c.beta1.powi(t);
        let corr2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m as f64 / corr1;
            let v_hat = *v as f64 / corr2;
            *p -= (lr * m_hat / (v_hat.sqrt() + c.epsilon)) as f32;
        }
    }
}
