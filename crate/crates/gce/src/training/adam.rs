//! Adam with bias correction over named parameter tensors.

use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig { learning_rate: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AdamError {
    #[error("non-finite gradient for parameter {parameter}")]
    NonFiniteGradient { parameter: String },
    #[error("gradient for {parameter} has {got} values, parameter has {want}")]
    ShapeMismatch { parameter: String, got: usize, want: usize },
}

/// First and second moment estimates per parameter, plus the shared
/// step counter. Slots appear the first time a parameter receives a
/// gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn from_parts(step: u64, moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>) -> AdamState {
        AdamState { step, moments }
    }

    pub fn moments(&self) -> &BTreeMap<String, (Vec<f64>, Vec<f64>)> {
        &self.moments
    }

    /// One optimizer step. Parameters appear through the visitor;
    /// parameters without a gradient entry are left untouched (their
    /// moments do not advance either).
    pub fn step<F>(
        &mut self,
        cfg: &AdamConfig,
        grads: &HashMap<String, Tensor>,
        mut for_each_param: F,
    ) -> Result<(), AdamError>
    where
        F: FnMut(&mut dyn FnMut(String, &mut Tensor)),
    {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let mut failure = None;
        let moments = &mut self.moments;
        for_each_param(&mut |name, tensor| {
            if failure.is_some() {
                return;
            }
            let Some(grad) = grads.get(&name) else { return };
            if grad.numel() != tensor.numel() {
                failure = Some(AdamError::ShapeMismatch {
                    parameter: name,
                    got: grad.numel(),
                    want: tensor.numel(),
                });
                return;
            }
            if !grad.all_finite() {
                failure = Some(AdamError::NonFiniteGradient { parameter: name });
                return;
            }
            let (m, v) = moments
                .entry(name)
                .or_insert_with(|| (vec![0.0; tensor.numel()], vec![0.0; tensor.numel()]));
            let theta = tensor.data_mut();
            for i in 0..theta.len() {
                let g = grad.data()[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
