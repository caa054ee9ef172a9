use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Module, NnError, Param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; zero gives plain Adam.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            weight_decay,
            ..Self::adam(lr)
        }
    }
}

/// Adam with bias-corrected moments and optional decoupled weight decay.
///
/// Moments are allocated lazily on the first step and must keep matching
/// the parameter shapes afterwards; call [`Adam::reset`] when they change.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Drops all moments and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.first.clear();
        self.second.clear();
    }

    pub fn moments(&self) -> (&[Array2<f64>], &[Array2<f64>]) {
        (&self.first, &self.second)
    }

    /// One update of `module`; gradients are left in place.
    pub fn step<M: Module>(&mut self, module: &mut M) -> Result<()> {
        self.step_params(&mut module.params_mut())?;
        module.bump_generation();
        Ok(())
    }

    /// One update of an explicit parameter list. A non-finite gradient
    /// anywhere rejects the whole step before anything is modified.
    pub fn step_params(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if let Some(k) = params
            .iter()
            .position(|p| p.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(NnError::NonFiniteGradient(k));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.dim() != p.value.dim())
        {
            return Err(NnError::Shape(
                "optimizer moments do not match parameters; reset the optimizer".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let decay = 1.0 - lr * weight_decay;
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Param { value, grad } = &mut **p;
            Zip::from(value)
                .and(&*grad)
                .and(m)
                .and(v)
                .for_each(|x, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *x = *x * decay - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
