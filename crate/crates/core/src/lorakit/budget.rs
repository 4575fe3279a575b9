//! Closed forms for fine-tuning a single example `(z, b)` under a norm budget
//! on the correction `Delta = W - W0`, with residual `r0 = b - W0 z`.

use serde::{Deserialize, Serialize};

use crate::biaslab::{muon_solution, signgd_solution};
use crate::error::{Error, Result};
use crate::linalg::{l1_norm, l2_norm, linf_norm, sign, spectral_norm, Matrix};

/// Entries with magnitude at or below this count as zero in support sizes.
pub const SUPPORT_SNAP: f64 = 1e-12;

/// `min_{||Delta||_max <= rho} 1/2 ||Delta z - r0||^2 = 1/2 sum_i (|r0_i| - rho ||z||_1)_+^2`.
pub fn budget_error_max(r0: &[f64], z: &[f64], rho: f64) -> Result<f64> {
    check_budget_inputs(r0, z, rho)?;
    // Written as a budget gap so that the error at `exact_fit_max` is exactly 0.
    let z1 = l1_norm(z);
    Ok(0.5
        * r0
            .iter()
            .map(|r| ((r.abs() / z1 - rho).max(0.0) * z1).powi(2))
            .sum::<f64>())
}

/// `min_{||Delta||_2 <= rho} 1/2 ||Delta z - r0||^2 = 1/2 (||r0||_2 - rho ||z||_2)_+^2`.
pub fn budget_error_spec(r0: &[f64], z: &[f64], rho: f64) -> Result<f64> {
    check_budget_inputs(r0, z, rho)?;
    let z2 = l2_norm(z);
    Ok(0.5 * ((l2_norm(r0) / z2 - rho).max(0.0) * z2).powi(2))
}

/// Smallest max-norm budget with zero error: `||r0||_inf / ||z||_1`.
pub fn exact_fit_max(r0: &[f64], z: &[f64]) -> Result<f64> {
    check_budget_inputs(r0, z, 0.0)?;
    Ok(linf_norm(r0) / l1_norm(z))
}

/// Smallest spectral budget with zero error: `||r0||_2 / ||z||_2`.
pub fn exact_fit_spec(r0: &[f64], z: &[f64]) -> Result<f64> {
    check_budget_inputs(r0, z, 0.0)?;
    Ok(l2_norm(r0) / l2_norm(z))
}

/// `||u||_0` after snapping `|u_i| <= SUPPORT_SNAP` to zero.
pub fn support_size(u: &[f64]) -> usize {
    u.iter().filter(|v| v.abs() > SUPPORT_SNAP).count()
}

/// Matched and mismatched exact-fit budgets for input geometry `u`
/// (`u = z` for full fine-tuning, `u = A z` for a frozen-`A` adapter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAnalysis {
    /// `||r0||_inf / ||u||_1`.
    pub rho_a_star: f64,
    /// `||r0||_2 / ||u||_2`.
    pub rho_mu_star: f64,
    /// Max-norm of the Muon limit: `||r0||_inf ||u||_inf / ||u||_2^2`.
    pub tilde_rho_mu_max: f64,
    /// Spectral norm of the SignGD limit: `sqrt(||u||_0) ||r0||_2 / ||u||_1`.
    pub tilde_rho_s_spec: f64,
    /// `tilde_rho_mu_max / rho_a_star`.
    pub inflation_max_geom: f64,
    /// `tilde_rho_s_spec / rho_mu_star`.
    pub inflation_spec_geom: f64,
    /// `||u||_0`.
    pub support: usize,
    /// Length of `u` (the adapter rank, or `n` for full fine-tuning).
    pub rank: usize,
    /// `r`, the worst-case bound on `inflation_max_geom`.
    pub bound_max_geom: f64,
    /// `sqrt(r)`, the worst-case bound on `inflation_spec_geom`.
    pub bound_spec_geom: f64,
}

pub fn thresholds(r0: &[f64], u: &[f64]) -> Result<BudgetAnalysis> {
    check_budget_inputs(r0, u, 0.0)?;
    if l2_norm(r0) == 0.0 {
        return Err(Error::Domain("thresholds need a nonzero residual r0".into()));
    }
    let (u1, u2, uinf) = (l1_norm(u), l2_norm(u), linf_norm(u));
    let (r2, rinf) = (l2_norm(r0), linf_norm(r0));
    let support = support_size(u);

    let rho_a_star = rinf / u1;
    let rho_mu_star = r2 / u2;
    let tilde_rho_mu_max = rinf * uinf / (u2 * u2);
    let tilde_rho_s_spec = (support as f64).sqrt() * r2 / u1;
    Ok(BudgetAnalysis {
        rho_a_star,
        rho_mu_star,
        tilde_rho_mu_max,
        tilde_rho_s_spec,
        inflation_max_geom: tilde_rho_mu_max / rho_a_star,
        inflation_spec_geom: tilde_rho_s_spec / rho_mu_star,
        support,
        rank: u.len(),
        bound_max_geom: u.len() as f64,
        bound_spec_geom: (u.len() as f64).sqrt(),
    })
}

/// Limits of SignGD and idealized Muon on `L(B) = 1/2 ||B u - r0||^2` from `B = 0`:
/// `(r0 sign(u)^T / ||u||_1, r0 u^T / ||u||_2^2)`.
pub fn surrogate_fixed_points(r0: &[f64], u: &[f64]) -> Result<(Matrix, Matrix)> {
    if l1_norm(u) == 0.0 {
        return Err(Error::Domain("surrogate input u = A z must be nonzero".into()));
    }
    Ok((signgd_solution(u, r0)?, muon_solution(u, r0)?))
}

/// Old-task loss `1/2 ||Delta x||^2` of a correction, with its two norm bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageReport {
    pub damage: f64,
    /// `(m / 2) ||Delta||_max^2 ||x||_1^2`.
    pub bound_max: f64,
    /// `1/2 ||Delta||_2^2 ||x||_2^2`.
    pub bound_spec: f64,
}

pub fn old_task_damage(delta: &Matrix, x: &[f64]) -> Result<DamageReport> {
    let dx = delta.apply(x)?;
    let m = delta.rows() as f64;
    let spec = spectral_norm(delta)?;
    Ok(DamageReport {
        damage: 0.5 * dx.iter().map(|v| v * v).sum::<f64>(),
        bound_max: 0.5 * m * delta.max_norm().powi(2) * l1_norm(x).powi(2),
        bound_spec: 0.5 * spec * spec * l2_norm(x).powi(2),
    })
}

/// Closed-form old-task damage of the frozen-`A` adapter limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDamage {
    /// `1/2 ||r0||^2 <sign(Az), Ax>^2 / ||Az||_1^2`, with `sign(0) = 0`.
    pub signgd: f64,
    /// `1/2 ||r0||^2 <Az, Ax>^2 / ||Az||_2^4`.
    pub muon: f64,
}

pub fn surrogate_damage(r0: &[f64], a: &Matrix, z: &[f64], x: &[f64]) -> Result<SurrogateDamage> {
    let az = a.apply(z)?;
    let ax = a.apply(x)?;
    let u1 = l1_norm(&az);
    let u2 = l2_norm(&az);
    if u1 == 0.0 {
        return Err(Error::Domain("surrogate damage needs A z != 0".into()));
    }
    let r2sq = r0.iter().map(|v| v * v).sum::<f64>();
    let sign_dot: f64 = az.iter().zip(&ax).map(|(u, v)| sign(*u) * v).sum();
    let dot: f64 = az.iter().zip(&ax).map(|(u, v)| u * v).sum();
    Ok(SurrogateDamage {
        signgd: 0.5 * r2sq * sign_dot * sign_dot / (u1 * u1),
        muon: 0.5 * r2sq * dot * dot / u2.powi(4),
    })
}

fn check_budget_inputs(r0: &[f64], z: &[f64], rho: f64) -> Result<()> {
    if r0.is_empty() || r0.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::Domain("budget inputs must be finite and non-empty".into()));
    }
    if l1_norm(z) == 0.0 {
        return Err(Error::Domain("fine-tuning input must be nonzero".into()));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("budget must be finite and >= 0, got {rho}")));
    }
    Ok(())
}
