use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state: one first/second moment accumulator per
/// parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let (first, second) = shapes
            .into_iter()
            .map(|len| (vec![0.0; len], vec![0.0; len]))
            .unzip();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn for_mlp(net: &Mlp, config: AdamConfig) -> Self {
        Self::new(config, net.params().iter().map(|p| p.len()))
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step on `params` along `grads`.
    ///
    /// Nothing is modified if any gradient entry is non-finite.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        check_len("optimizer parameter groups", self.first.len(), params.len())?;
        check_len("optimizer gradient groups", self.first.len(), grads.len())?;
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            check_len("optimizer group length", self.first[i].len(), p.len())?;
            check_len("optimizer gradient length", self.first[i].len(), g.len())?;
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient group {i} entry {j} = {}",
                    g[j]
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        self.step(net.params_mut(), grads.slices())
    }
}
