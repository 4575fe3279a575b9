use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense real matrix with finite entries.
///
/// Constructors reject NaN/Inf and empty shapes. Arithmetic helpers assume
/// finite operands and do not re-validate; callers that can overflow (the
/// training loops) check [`Matrix::is_finite`] themselves.
#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::InvalidShape {
                rows,
                cols,
                len: entries.len(),
            });
        }
        check_finite(&entries)?;
        Ok(Self(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidShape {
                rows: m,
                cols: n,
                len: rows.iter().map(|r| r.len()).sum(),
            });
        }
        Self::from_row_major(m, n, rows.concat())
    }

    /// Wraps an existing nalgebra matrix after validating it.
    pub fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::InvalidShape {
                rows: inner.nrows(),
                cols: inner.ncols(),
                len: inner.len(),
            });
        }
        check_finite(inner.as_slice())?;
        Ok(Self(inner))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidShape {
                rows: 0,
                cols: 0,
                len: 0,
            });
        }
        check_finite(diag)?;
        let n = diag.len();
        Ok(Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else {
                0.0
            }
        })))
    }

    /// Outer product `u v^T`.
    pub fn outer(u: &[f64], v: &[f64]) -> Result<Self> {
        if u.is_empty() || v.is_empty() {
            return Err(Error::InvalidShape {
                rows: u.len(),
                cols: v.len(),
                len: 0,
            });
        }
        check_finite(u)?;
        check_finite(v)?;
        Ok(Self(DMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])))
    }

    pub(crate) fn wrap(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.nrows() > 0 && inner.ncols() > 0);
        Self(inner)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.0[(i, j)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    /// Entries in storage order (column-major). Use for order-free reductions.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: (self.cols(), rhs.cols()),
                got: rhs.shape(),
            });
        }
        Ok(Self(&self.0 * &rhs.0))
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(Error::ShapeMismatch {
                op: "apply",
                expected: (self.cols(), 1),
                got: (v.len(), 1),
            });
        }
        Ok((0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)] * v[j]).sum())
            .collect())
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same_shape("add", rhs)?;
        Ok(Self(&self.0 + &rhs.0))
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same_shape("sub", rhs)?;
        Ok(Self(&self.0 - &rhs.0))
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same_shape("hadamard", rhs)?;
        Ok(Self(self.0.component_mul(&rhs.0)))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Self(&self.0 * c)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Matrix {
        Self(self.0.map(f))
    }

    /// Entrywise sign with `sign(0) = 0`.
    pub fn sign(&self) -> Matrix {
        self.map(sign)
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn check_same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }
}

/// Scalar sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows(), self.cols())?;
        f.debug_list()
            .entries((0..self.rows()).map(|i| self.row(i)))
            .finish()
    }
}

/// On-disk form: `{"m": rows, "n": cols, "entries": [row-major]}`.
#[derive(Serialize, Deserialize)]
struct MatrixFile {
    m: usize,
    n: usize,
    entries: Vec<f64>,
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile {
            m: self.rows(),
            n: self.cols(),
            entries: self.to_row_major(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = MatrixFile::deserialize(deserializer)?;
        Matrix::from_row_major(file.m, file.n, file.entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_entry_count() {
        assert!(matches!(
            Matrix::from_row_major(2, 2, vec![1.0; 3]),
            Err(Error::InvalidShape { .. })
        ));
        assert!(Matrix::from_row_major(0, 2, vec![]).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        let err = Matrix::from_row_major(1, 3, vec![1.0, f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(Matrix::from_row_major(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn row_major_round_trip_and_json() {
        let m = Matrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.to_row_major(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"m":2,"n":3,"entries":[1.0,2.0,3.0,4.0,5.0,6.0]}"#);
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix>(r#"{"m":2,"n":2,"entries":[1.0]}"#).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
        assert!(a.add(&b.transpose()).is_err());
        assert!(a.apply(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sign_of_zero_is_zero() {
        let m = Matrix::from_rows(&[&[0.0, -3.0, 2.5]]).unwrap();
        assert_eq!(m.sign().to_row_major(), vec![0.0, -1.0, 1.0]);
    }
}
