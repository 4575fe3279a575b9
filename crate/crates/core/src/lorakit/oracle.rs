//! Iterative reference solvers for the budgeted fine-tuning problems.
//!
//! Both minimize `1/2 ||Delta z - r0||^2` by accelerated projected gradient
//! over the full matrix `Delta`, so they share no algebra with the closed forms.

use crate::error::{Error, Result};
use crate::linalg::{l2_norm, svd, Matrix};

pub const DEFAULT_ITERS: usize = 2_000;

/// Optimal error over `||Delta||_max <= rho`.
pub fn projected_descent_max(r0: &[f64], z: &[f64], rho: f64, iters: usize) -> Result<f64> {
    accelerated(r0, z, rho, iters, |d| Ok(d.map(|v| v.clamp(-rho, rho))))
}

/// Optimal error over `||Delta||_2 <= rho`, projecting by clipping singular values.
pub fn projected_descent_spec(r0: &[f64], z: &[f64], rho: f64, iters: usize) -> Result<f64> {
    accelerated(r0, z, rho, iters, |d| {
        let mut s = svd(d)?;
        if s.singular_values.first().is_none_or(|&top| top <= rho) {
            return Ok(d.clone());
        }
        for v in &mut s.singular_values {
            *v = v.min(rho);
        }
        Ok(s.reconstruct())
    })
}

fn accelerated(
    r0: &[f64],
    z: &[f64],
    rho: f64,
    iters: usize,
    project: impl Fn(&Matrix) -> Result<Matrix>,
) -> Result<f64> {
    let zz = l2_norm(z).powi(2);
    if r0.is_empty() || zz == 0.0 || !zz.is_finite() {
        return Err(Error::Domain("oracle needs non-empty r0 and nonzero z".into()));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("budget must be finite and >= 0, got {rho}")));
    }
    let objective = |d: &Matrix| -> Result<f64> {
        let dz = d.apply(z)?;
        Ok(0.5 * dz.iter().zip(r0).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
    };
    let step = 1.0 / zz;
    let mut x = Matrix::zeros(r0.len(), z.len());
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let res: Vec<f64> = y.apply(z)?.iter().zip(r0).map(|(a, b)| a - b).collect();
        let grad = Matrix::outer(&res, z)?;
        let next = project(&y.sub(&grad.scale(step))?)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next.add(&next.sub(&x)?.scale((t - 1.0) / t_next))?;
        x = next;
        t = t_next;
    }
    objective(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorakit::{budget_error_max, budget_error_spec};

    #[test]
    fn oracle_matches_hand_value() {
        let e = projected_descent_max(&[3.0, 1.0], &[1.0, -1.0], 1.0, DEFAULT_ITERS).unwrap();
        assert!((e - 0.5).abs() < 1e-8, "{e}");
    }

    #[test]
    fn oracles_agree_with_closed_forms() {
        let r0 = [0.7, -1.3, 0.2];
        let z = [0.5, -0.25, 1.0, 0.1];
        for rho in [0.0, 0.1, 0.4, 1.0] {
            let a = projected_descent_max(&r0, &z, rho, DEFAULT_ITERS).unwrap();
            let b = budget_error_max(&r0, &z, rho).unwrap();
            assert!((a - b).abs() < 1e-6, "max rho={rho}: {a} vs {b}");
            let a = projected_descent_spec(&r0, &z, rho, DEFAULT_ITERS).unwrap();
            let b = budget_error_spec(&r0, &z, rho).unwrap();
            assert!((a - b).abs() < 1e-6, "spec rho={rho}: {a} vs {b}");
        }
    }
}
