use serde::{Deserialize, Serialize};

use super::check_lr;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..1.0;
        if !unit.contains(&self.beta1) || !unit.contains(&self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "adam betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "adam eps must be > 0 and weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// First/second moment buffers for one parameter matrix.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    m: Matrix,
    v: Matrix,
    t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.v
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update; returns the new weights.
    pub fn step(&mut self, w: &Matrix, g: &Matrix, lr: f64) -> Result<Matrix> {
        check_lr(lr)?;
        self.m.check_same_shape("adam_step", w)?;
        self.m.check_same_shape("adam_step", g)?;

        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.t += 1;
        let t = self.t as i32;

        let m = self.m.as_dmatrix() * beta1 + g.as_dmatrix() * (1.0 - beta1);
        let v = self.v.as_dmatrix() * beta2 + g.as_dmatrix().map(|x| x * x) * (1.0 - beta2);
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let mut out = w.as_dmatrix().clone();
        if weight_decay > 0.0 {
            out -= w.as_dmatrix() * (lr * weight_decay);
        }
        out.zip_zip_apply(&m, &v, |wi, mi, vi| {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *wi -= lr * m_hat / (v_hat.sqrt() + eps);
        });

        self.m = Matrix::wrap(m);
        self.v = Matrix::wrap(v);
        Matrix::from_dmatrix(out)
    }
}
