//! AMSGrad with bias correction and decoupled weight decay.

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamGrads};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmsGradConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AmsGradConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// Moment estimates for a list of flat parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGrad {
    pub config: AmsGradConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    v_max: Vec<Vec<f64>>,
    t: u64,
}

impl AmsGrad {
    /// State for buffers of the given lengths, all moments zero.
    pub fn new(config: AmsGradConfig, sizes: &[usize]) -> Self {
        let zeros = || sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            v_max: zeros(),
            t: 0,
        }
    }

    pub fn for_model(config: AmsGradConfig, params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
        Self::new(config, &sizes)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Running maximum of the second moment, per buffer.
    pub fn v_max(&self) -> &[Vec<f64>] {
        &self.v_max
    }

    /// One update over matching parameter and gradient buffers.
    ///
    /// Non-finite gradients are rejected before any state is touched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} buffers, got {} parameter and {} gradient buffers",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "buffer {i}: optimizer expects {} values, got {} parameters and {} gradients",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Optimizer(format!(
                    "non-finite gradient {} in buffer {i} at {j}",
                    g[j]
                )));
            }
        }

        let AmsGradConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v, v_max) = (&mut self.m[i], &mut self.v[i], &mut self.v_max[i]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                v_max[j] = v_max[j].max(v[j]);
                let m_hat = m[j] / c1;
                let v_bar = v_max[j] / c2;
                let old = p[j];
                p[j] = old - lr * m_hat / (v_bar.sqrt() + eps) - lr * weight_decay * old;
            }
        }
        Ok(())
    }

    pub fn step_model(&mut self, params: &mut ModelParams, grads: &ParamGrads) -> Result<()> {
        let g = grads.buffers();
        let mut p = params.buffers_mut();
        self.step(&mut p, &g)
    }
}
