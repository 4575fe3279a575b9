use serde::{Deserialize, Serialize};

use super::{singular_values, Matrix};
use crate::error::{Error, Result};

/// Spectral diagnostics of a nonzero matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// `||W||_F^2 / ||W||_2^2`.
    pub stable_rank: f64,
    /// Shannon entropy of `p_i = s_i^2 / sum_j s_j^2`, normalized by `ln(min(m, n))`.
    /// Zero when `min(m, n) = 1`.
    pub svd_entropy: f64,
    pub max_norm: f64,
    pub spectral_norm: f64,
    pub frobenius_norm: f64,
    pub singular_values: Vec<f64>,
}

pub fn spectral_report(m: &Matrix) -> Result<SpectralReport> {
    if m.is_zero() {
        return Err(Error::Degenerate("spectral report of the zero matrix"));
    }
    let sigma = singular_values(m)?;
    let spectral_norm = sigma[0];
    let energy: f64 = sigma.iter().map(|s| s * s).sum();
    let stable_rank = energy / (spectral_norm * spectral_norm);

    let r = m.rows().min(m.cols());
    let svd_entropy = if r == 1 {
        0.0
    } else if sigma.len() == r && sigma[r - 1] == spectral_norm {
        1.0
    } else {
        let h: f64 = sigma
            .iter()
            .map(|s| s * s / energy)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        (h / (r as f64).ln()).clamp(0.0, 1.0)
    };

    Ok(SpectralReport {
        stable_rank,
        svd_entropy,
        max_norm: m.max_norm(),
        spectral_norm,
        frobenius_norm: energy.sqrt(),
        singular_values: sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixNorms {
    pub max: f64,
    pub spectral: f64,
    pub frobenius: f64,
}

pub fn matrix_norms(m: &Matrix) -> Result<MatrixNorms> {
    Ok(MatrixNorms {
        max: m.max_norm(),
        spectral: spectral_norm(m)?,
        frobenius: m.frobenius_norm(),
    })
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    Ok(singular_values(m)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorNorms {
    /// Support size: number of nonzero entries.
    pub l0: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn vector_norms(v: &[f64]) -> VectorNorms {
    VectorNorms {
        l0: v.iter().filter(|&&x| x != 0.0).count(),
        l1: l1_norm(v),
        l2: l2_norm(v),
        linf: linf_norm(v),
    }
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
