use crate::error::{Error, Result};

use super::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        let n = params.as_slice().len();
        AdamState {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update. On error neither `params` nor the state change.
    pub fn step(&mut self, params: &mut MlpParams, grad: &MlpParams) -> Result<()> {
        let g = grad.as_slice();
        if g.len() != self.m.len() || params.as_slice().len() != self.m.len() {
            return Err(Error::Shape(format!(
                "Adam state holds {} moments, got {} gradients for {} parameters",
                self.m.len(),
                g.len(),
                params.as_slice().len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("gradient component {i}"),
                detail: g[i].to_string(),
            });
        }

        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step + 1;
        let c1 = 1.0 - beta1.powi(t as i32);
        let c2 = 1.0 - beta2.powi(t as i32);
        let mut m = self.m.clone();
        let mut v = self.v.clone();
        let mut next = params.as_slice().to_vec();
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            next[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("parameter {i} after Adam step {t}"),
                detail: next[i].to_string(),
            });
        }
        params.as_mut_slice().copy_from_slice(&next);
        self.m = m;
        self.v = v;
        self.step = t;
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut MlpParams, grad: &MlpParams, state: &mut AdamState) -> Result<()> {
    state.step(params, grad)
}
