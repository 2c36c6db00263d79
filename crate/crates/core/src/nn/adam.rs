use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> AdamState<T> {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { config, m: zeros(), v: zeros(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    /// One bias-corrected Adam update. Nothing is modified when a gradient
    /// is non-finite or shapes disagree.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<(), NnError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(NnError::Shape("parameter/gradient/moment counts differ".into()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::Shape(format!("{:?} vs {:?}", p.shape(), g.shape())));
            }
        }
        if !grads.iter().all(Tensor::is_finite) {
            return Err(NnError::NonFinite("gradient"));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / corr1;
                let vhat = *vi / corr2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
