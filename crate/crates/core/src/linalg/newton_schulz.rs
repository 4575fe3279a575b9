//! Newton-Schulz orthogonalization with pluggable quintic schedules.
//!
//! Each step applies `X <- a X + b (X X^T) X + c (X X^T)^2 X`, which acts on
//! every singular value independently through `p(s) = a s + b s^3 + c s^5`.
//! [`scalar_ns_map`] evaluates that composition directly and serves as the
//! exact oracle for the matrix iteration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Quintic coefficients of the standard Muon iteration.
pub const FIXED_QUINTIC: [f64; 3] = [3.4445, -4.7750, 2.0315];

/// Default number of Newton-Schulz steps.
pub const DEFAULT_NS_STEPS: usize = 5;

/// Ordered per-step `(a, b, c)` coefficients. JSON form: `{"steps": [[a,b,c], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleFile", into = "ScheduleFile")]
pub struct CoefficientSchedule {
    steps: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    steps: Vec<[f64; 3]>,
}

impl TryFrom<ScheduleFile> for CoefficientSchedule {
    type Error = Error;

    fn try_from(file: ScheduleFile) -> Result<Self> {
        Self::new(file.steps)
    }
}

impl From<CoefficientSchedule> for ScheduleFile {
    fn from(s: CoefficientSchedule) -> Self {
        ScheduleFile { steps: s.steps }
    }
}

impl CoefficientSchedule {
    pub fn new(steps: Vec<[f64; 3]>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no steps".into()));
        }
        if let Some(i) = steps.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSchedule(format!("step {i} has a non-finite coefficient")));
        }
        Ok(Self { steps })
    }

    /// The fixed quintic repeated `n_steps` times.
    pub fn fixed_quintic(n_steps: usize) -> Result<Self> {
        Self::new(vec![FIXED_QUINTIC; n_steps])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn steps(&self) -> &[[f64; 3]] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl Default for CoefficientSchedule {
    fn default() -> Self {
        Self {
            steps: vec![FIXED_QUINTIC; DEFAULT_NS_STEPS],
        }
    }
}

/// Composed scalar polynomial `p_k(...p_1(x))`.
pub fn scalar_ns_map(x: f64, schedule: &CoefficientSchedule) -> f64 {
    schedule.steps.iter().fold(x, |s, &[a, b, c]| {
        let s2 = s * s;
        s * (a + s2 * (b + c * s2))
    })
}

/// Runs the matrix iteration on `M / ||M||_F`. The zero matrix maps to zero.
pub fn newton_schulz(m: &Matrix, schedule: &CoefficientSchedule) -> Result<Matrix> {
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    // Iterate on the short side so the Gram matrix is min(m, n) square.
    let transposed = m.rows() > m.cols();
    let mut x = if transposed {
        m.as_dmatrix().transpose()
    } else {
        m.as_dmatrix().clone()
    };
    x /= norm;
    for &[a, b, c] in schedule.steps() {
        let gram = &x * x.transpose();
        let poly = &gram * b + (&gram * &gram) * c;
        x = &x * a + poly * &x;
    }
    let out = if transposed { x.transpose() } else { x };
    let out = Matrix::from_dmatrix(out)?;
    Ok(out)
}

/// Range of the scalar map over a uniform grid of `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsEnvelope {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub min: f64,
    pub max: f64,
    /// Largest `|p(x) - 1|` over the grid.
    pub max_deviation: f64,
}

impl NsEnvelope {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

/// Evaluates the scalar map on `points` equispaced abscissae spanning `[lo, hi]`.
pub fn ns_scan(
    schedule: &CoefficientSchedule,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(Vec<(f64, f64)>, NsEnvelope)> {
    if points == 0 {
        return Err(Error::Domain("scan needs at least one point".into()));
    }
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
        return Err(Error::Domain(format!("empty or invalid scan range [{lo}, {hi}]")));
    }
    let rows: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let x = if points == 1 {
                lo
            } else if k == points - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            };
            (x, scalar_ns_map(x, schedule))
        })
        .collect();
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let max_deviation = rows.iter().map(|r| (r.1 - 1.0).abs()).fold(0.0, f64::max);
    Ok((
        rows,
        NsEnvelope {
            lo,
            hi,
            points,
            min,
            max,
            max_deviation,
        },
    ))
}
