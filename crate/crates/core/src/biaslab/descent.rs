use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{regression_grad, RegressionProblem};
use crate::error::{Error, Result};
use crate::linalg::{sign, Matrix};
use crate::optim::{OptimizerSpec, StepSchedule};

/// One logged iterate. Both distances are max-norm distances from `W_t` to the
/// SignGD limit (`dist_max`) and to the idealized Muon limit (`dist_spec`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub eta: f64,
    pub loss: f64,
    pub dist_max: f64,
    pub dist_spec: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    /// CSV with header `t,eta,loss,dist_max,dist_spec`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["t", "eta", "loss", "dist_max", "dist_spec"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

/// Which closed form an optimizer is expected to approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `W0 + r0 sign(x)^T / ||x||_1` (SignGD, Adam).
    MaxNorm,
    /// `W0 + r0 x^T / ||x||_2^2` (Muon).
    Spectral,
}

impl Target {
    pub fn matched(spec: &OptimizerSpec) -> Self {
        match spec {
            OptimizerSpec::Signgd | OptimizerSpec::Adam(_) => Target::MaxNorm,
            OptimizerSpec::Muon(_) => Target::Spectral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    pub optimizer: OptimizerSpec,
    pub schedule: StepSchedule,
    pub steps: usize,
    pub tol: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_log_every() -> usize {
    1
}

impl DescentConfig {
    /// Harmonic(0.5, 1) for 20 000 steps with tolerance 1e-3.
    pub fn certification(optimizer: OptimizerSpec) -> Self {
        Self {
            optimizer,
            schedule: StepSchedule::Harmonic { eta0: 0.5, tau: 1.0 },
            steps: 20_000,
            tol: 1e-3,
            log_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.schedule.validate()?;
        if self.log_every == 0 {
            return Err(Error::InvalidConfig("log_every must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of a descent run. Running out of budget is reported through
/// `converged = false`, never as an error.
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub trajectory: Trajectory,
    pub final_weights: Matrix,
    pub target: Target,
    /// `||W_T - W_target||_max`.
    pub final_distance: f64,
    pub converged: bool,
    /// First logged step at which the distance dropped below `tol`.
    pub first_hit: Option<usize>,
}

pub fn run_descent(problem: &RegressionProblem, config: &DescentConfig) -> Result<DescentOutcome> {
    config.validate()?;
    let (m, n) = problem.shape();
    let max_limit = problem.signgd_limit()?;
    let spec_limit = problem.muon_limit()?;
    let target = Target::matched(&config.optimizer);
    let target_weights = match target {
        Target::MaxNorm => &max_limit,
        Target::Spectral => &spec_limit,
    };

    let mut opt = config.optimizer.build(m, n)?;
    let mut w = problem.w0().clone();
    let mut trajectory = Trajectory::default();
    let mut first_hit = None;

    for t in 0..=config.steps {
        let eta = config.schedule.eta(t);
        if t % config.log_every == 0 || t == config.steps {
            let record = TrajectoryRecord {
                t,
                eta,
                loss: problem.loss(&w)?,
                dist_max: w.sub(&max_limit)?.max_norm(),
                dist_spec: w.sub(&spec_limit)?.max_norm(),
            };
            let d = match target {
                Target::MaxNorm => record.dist_max,
                Target::Spectral => record.dist_spec,
            };
            if first_hit.is_none() && d < config.tol {
                first_hit = Some(t);
            }
            trajectory.records.push(record);
        }
        if t == config.steps {
            break;
        }
        let g = regression_grad(&w, problem)?;
        w = opt.step(&w, &g, eta)?;
        if !w.is_finite() {
            return Err(Error::Diverged { step: t });
        }
    }

    let final_distance = w.sub(target_weights)?.max_norm();
    Ok(DescentOutcome {
        trajectory,
        final_weights: w,
        target,
        final_distance,
        converged: final_distance < config.tol,
        first_hit,
    })
}

/// Iterates of `d_{t+1} = d_t - eta_t sign(d_t)`, `d_0 ..= d_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrajectory {
    pub values: Vec<f64>,
}

impl ScalarTrajectory {
    pub fn final_abs(&self) -> f64 {
        self.values.last().map_or(0.0, |v| v.abs())
    }

    /// Smallest `|d_t|` among the last `k` iterates.
    pub fn min_abs_tail(&self, k: usize) -> f64 {
        let start = self.values.len().saturating_sub(k);
        self.values[start..]
            .iter()
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }

    /// Largest `|d_t|` among the last `k` iterates.
    pub fn max_abs_tail(&self, k: usize) -> f64 {
        let start = self.values.len().saturating_sub(k);
        self.values[start..].iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

pub fn lemma_recurrence(d0: f64, schedule: &StepSchedule, steps: usize) -> ScalarTrajectory {
    let mut values = Vec::with_capacity(steps + 1);
    let mut d = d0;
    values.push(d);
    for t in 0..steps {
        d -= schedule.eta(t) * sign(d);
        values.push(d);
    }
    ScalarTrajectory { values }
}
