use alloc::vec;
use alloc::vec::Vec;

use super::grad::Gradients;
use super::model::SdnModel;
use crate::error::{Error, Result};
use crate::math::{powf, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// ADAM with bias-corrected first and second moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &SdnModel, cfg: AdamConfig) -> Self {
        let shapes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
        Adam {
            cfg,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut SdnModel, grads: &Gradients) -> Result<()> {
        let tensors = grads.tensors();
        if tensors.len() != self.first.len() {
            return Err(Error::invalid("gradient tensors do not match the optimizer state"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.cfg;
        // lr·m̂/(√v̂ + eps) with the bias corrections folded into scalars
        let step_size = lr / (1.0 - powf(b1, self.step as f64));
        let inv_sqrt_c2 = 1.0 / sqrt(1.0 - powf(b2, self.step as f64));
        for (((param, g), m), v) in model
            .parameters_mut()
            .into_iter()
            .zip(tensors)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((p, &g), m), v) in param.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step_size * *m / (sqrt(*v) * inv_sqrt_c2 + eps);
            }
        }
        Ok(())
    }
}
