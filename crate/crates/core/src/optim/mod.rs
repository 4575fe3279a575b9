//! Step rules for Adam, SignGD and Muon, plus step-size schedules.
//!
//! Every step function takes the current weights and gradient and returns the
//! new weights; optimizer state is owned by the caller's training loop.

mod adam;
mod muon;
mod schedule;

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use muon::{MuonConfig, MuonScaling, MuonState};
pub use schedule::StepSchedule;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub(crate) fn check_lr(lr: f64) -> Result<()> {
    if lr >= 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("learning rate must be finite and >= 0, got {lr}")))
    }
}

/// `W - lr * sign(G)` with `sign(0) = 0`.
pub fn signgd_step(w: &Matrix, g: &Matrix, lr: f64) -> Result<Matrix> {
    check_lr(lr)?;
    w.check_same_shape("signgd_step", g)?;
    w.sub(&g.sign().scale(lr))
}

/// Serializable optimizer choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Signgd,
    Adam(AdamConfig),
    Muon(MuonConfig),
}

impl OptimizerSpec {
    pub fn adam() -> Self {
        OptimizerSpec::Adam(AdamConfig::default())
    }

    pub fn muon() -> Self {
        OptimizerSpec::Muon(MuonConfig::default())
    }

    pub fn idealized_muon() -> Self {
        OptimizerSpec::Muon(MuonConfig::idealized())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerSpec::Signgd => Ok(()),
            OptimizerSpec::Adam(c) => c.validate(),
            OptimizerSpec::Muon(c) => c.validate(),
        }
    }

    /// Short label used in file names and tables.
    pub fn label(&self) -> &'static str {
        match self {
            OptimizerSpec::Signgd => "signgd",
            OptimizerSpec::Adam(_) => "adam",
            OptimizerSpec::Muon(c) if c.exact => "muon_exact",
            OptimizerSpec::Muon(_) => "muon",
        }
    }

    pub fn build(&self, rows: usize, cols: usize) -> Result<Optimizer> {
        Ok(match self {
            OptimizerSpec::Signgd => Optimizer::Signgd,
            OptimizerSpec::Adam(c) => Optimizer::Adam(AdamState::new(rows, cols, *c)?),
            OptimizerSpec::Muon(c) => Optimizer::Muon(MuonState::new(rows, cols, c.clone())?),
        })
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Signgd,
    Adam(AdamState),
    Muon(MuonState),
}

impl Optimizer {
    pub fn step(&mut self, w: &Matrix, g: &Matrix, lr: f64) -> Result<Matrix> {
        match self {
            Optimizer::Signgd => signgd_step(w, g, lr),
            Optimizer::Adam(s) => s.step(w, g, lr),
            Optimizer::Muon(s) => s.step(w, g, lr),
        }
    }
}
