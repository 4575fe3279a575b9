use nalgebra::DMatrix;

use super::Matrix;
use crate::error::{Error, Result};

/// Accepted residuals per unit of `max(m, n)`: reconstruction relative to
/// `||M||_max`, and orthonormality of the singular vectors.
const CHECK_TOL: f64 = 1e-12;

/// Compact singular value decomposition `M = U diag(S) V^T`.
///
/// `u` is `m x k`, `v` is `n x k` with `k = min(m, n)`; singular values are
/// sorted non-increasing and the columns of `u`, `v` follow that order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let u = self.u.as_dmatrix();
        let scaled = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, j)] * self.singular_values[j]);
        Matrix::wrap(scaled * self.v.as_dmatrix().transpose())
    }

    /// Number of singular values above `rel_tol * sigma_max`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .take_while(|&&s| s > rel_tol * top)
            .count()
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    decompose(m)
        .filter(|d| verified(d, m))
        .ok_or(Error::SvdNonConvergence { rows, cols })
}

fn decompose(m: &Matrix) -> Option<Svd> {
    let (rows, cols) = m.shape();
    let a = m.as_dmatrix();
    let dec = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]).thin_svd().ok()?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    if sigma.iter().any(|s| !s.is_finite()) {
        return None;
    }

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

    let k = order.len();
    let u_sorted = DMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(cols, k, |i, j| v[(i, order[j])]);
    Some(Svd {
        u: Matrix::wrap(u_sorted),
        singular_values: order.iter().map(|&i| sigma[i].max(0.0)).collect(),
        v: Matrix::wrap(v_sorted),
    })
}

fn verified(dec: &Svd, m: &Matrix) -> bool {
    let tol = CHECK_TOL * m.rows().max(m.cols()) as f64;
    let orthonormal = |q: &Matrix| {
        let q = q.as_dmatrix();
        let gram = q.transpose() * q;
        (gram - DMatrix::identity(q.ncols(), q.ncols())).amax() <= tol
    };
    let scale = m.max_norm();
    let err = dec.reconstruct().sub(m).map_or(f64::INFINITY, |d| d.max_norm());
    orthonormal(&dec.u) && orthonormal(&dec.v) && err <= tol * scale
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.singular_values)
}

/// Relative cutoff below which a singular value is treated as zero when
/// forming the polar factor.
pub fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * 4.0
}

/// Orthogonal polar factor `U V^T` of the compact SVD restricted to the
/// numerically nonzero singular values. `polar_ortho(0) = 0`.
pub fn polar_ortho(m: &Matrix) -> Result<Matrix> {
    if m.is_zero() {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let dec = svd(m)?;
    let rank = dec.numerical_rank(rank_tolerance(m.rows(), m.cols()));
    let u = dec.u.as_dmatrix().columns(0, rank);
    let v = dec.v.as_dmatrix().columns(0, rank);
    Ok(Matrix::wrap(u * v.transpose()))
}
