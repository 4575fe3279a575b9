use serde::{Deserialize, Serialize};

use super::check_lr;
use crate::error::{Error, Result};
use crate::linalg::{newton_schulz, polar_ortho, CoefficientSchedule, Matrix};

/// Shape-dependent multiplier on the orthogonalized update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuonScaling {
    /// `sqrt(max(1, m / n))`.
    Original,
    /// `0.2 * sqrt(max(m, n))`.
    Moonlight,
    /// Unit multiplier (idealized analysis).
    None,
}

impl MuonScaling {
    pub fn multiplier(self, rows: usize, cols: usize) -> f64 {
        match self {
            MuonScaling::Original => (rows as f64 / cols as f64).max(1.0).sqrt(),
            MuonScaling::Moonlight => 0.2 * (rows.max(cols) as f64).sqrt(),
            MuonScaling::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuonConfig {
    pub beta: f64,
    /// Orthogonalize `G + beta * M` (after the momentum update) instead of `M`.
    pub nesterov: bool,
    pub scaling: MuonScaling,
    pub schedule: CoefficientSchedule,
    /// Use the exact polar factor instead of Newton-Schulz.
    pub exact: bool,
    pub weight_decay: f64,
}

impl Default for MuonConfig {
    fn default() -> Self {
        Self {
            beta: 0.95,
            nesterov: true,
            scaling: MuonScaling::Moonlight,
            schedule: CoefficientSchedule::default(),
            exact: false,
            weight_decay: 0.0,
        }
    }
}

impl MuonConfig {
    /// Momentum-free Muon with exact orthogonalization and unit scaling.
    pub fn idealized() -> Self {
        Self {
            beta: 0.0,
            nesterov: false,
            scaling: MuonScaling::None,
            schedule: CoefficientSchedule::default(),
            exact: true,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!(
                "muon beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("muon weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MuonState {
    config: MuonConfig,
    momentum: Matrix,
}

impl MuonState {
    pub fn new(rows: usize, cols: usize, config: MuonConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            momentum: Matrix::zeros(rows, cols),
        })
    }

    pub fn config(&self) -> &MuonConfig {
        &self.config
    }

    pub fn momentum(&self) -> &Matrix {
        &self.momentum
    }

    /// The orthogonalized direction `O` for gradient `g`, updating momentum.
    pub fn direction(&mut self, g: &Matrix) -> Result<Matrix> {
        self.momentum.check_same_shape("muon_step", g)?;
        let beta = self.config.beta;
        let momentum = self.momentum.scale(beta).add(g)?;
        let input = if self.config.nesterov {
            g.add(&momentum.scale(beta))?
        } else {
            momentum.clone()
        };
        let o = if self.config.exact {
            polar_ortho(&input)?
        } else {
            newton_schulz(&input, &self.config.schedule)?
        };
        self.momentum = momentum;
        Ok(o)
    }

    pub fn step(&mut self, w: &Matrix, g: &Matrix, lr: f64) -> Result<Matrix> {
        check_lr(lr)?;
        self.momentum.check_same_shape("muon_step", w)?;
        let o = self.direction(g)?;
        let (rows, cols) = w.shape();
        let mult = self.config.scaling.multiplier(rows, cols);

        let mut out = w.as_dmatrix().clone();
        if self.config.weight_decay > 0.0 {
            out -= w.as_dmatrix() * (lr * self.config.weight_decay);
        }
        out -= o.as_dmatrix() * (lr * mult);
        Matrix::from_dmatrix(out)
    }
}
