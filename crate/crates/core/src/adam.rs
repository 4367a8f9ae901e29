//! Bias-corrected Adam over any parameter container exposing flat blocks.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A parameter container viewed as an ordered list of contiguous blocks.
/// Gradients use the same type, so block order and lengths always agree.
pub trait ParamSet {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
}

/// Concatenates every block in order.
pub fn flatten<P: ParamSet + ?Sized>(params: &P) -> Vec<f64> {
    params.blocks().concat()
}

/// Inverse of [`flatten`].
pub fn unflatten_into<P: ParamSet + ?Sized>(params: &mut P, values: &[f64]) -> Result<()> {
    let mut blocks = params.blocks_mut();
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    if total != values.len() {
        return Err(Error::shape("unflatten_into", total, values.len()));
    }
    let mut offset = 0;
    for block in blocks.iter_mut() {
        let n = block.len();
        block.copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .blocks()
            .iter()
            .map(|b| alloc::vec![0.0; b.len()])
            .collect();
        AdamState {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// One Adam update of `params` from `grads`.
    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        let mut param_blocks = params.blocks_mut();
        if grad_blocks.len() != param_blocks.len() || param_blocks.len() != self.first_moment.len() {
            return Err(Error::shape(
                "adam_step block count",
                self.first_moment.len(),
                format!("{} params / {} grads", param_blocks.len(), grad_blocks.len()),
            ));
        }
        for (b, (p, g)) in param_blocks.iter().zip(&grad_blocks).enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[b].len() {
                return Err(Error::shape(
                    "adam_step block length",
                    self.first_moment[b].len(),
                    format!("{} params / {} grads in block {b}", p.len(), g.len()),
                ));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let correction1 = 1.0 - libm::pow(beta1, t);
        let correction2 = 1.0 - libm::pow(beta2, t);

        for (b, (p, g)) in param_blocks.iter_mut().zip(&grad_blocks).enumerate() {
            let m = &mut self.first_moment[b];
            let v = &mut self.second_moment[b];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / correction1;
                let v_hat = v[j] / correction2;
                p[j] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}
