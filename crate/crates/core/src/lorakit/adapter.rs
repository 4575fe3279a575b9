use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::gaussian_matrix;

/// How the adapter product is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoraScaling {
    /// `alpha / r`.
    Classic,
    /// Rank-stabilized `alpha / sqrt(r)`.
    Rs,
}

impl LoraScaling {
    pub fn factor(self, alpha: f64, rank: usize) -> f64 {
        match self {
            LoraScaling::Classic => alpha / rank as f64,
            LoraScaling::Rs => alpha / (rank as f64).sqrt(),
        }
    }
}

/// `W = W0 + s * B A` with `B: m x r`, `A: r x n` and `s` from [`LoraScaling`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    w0: Matrix,
    b: Matrix,
    a: Matrix,
    alpha: f64,
    scaling: LoraScaling,
    a_trainable: bool,
}

impl LoraAdapter {
    /// Standard initialization: `B = 0`, `A` Gaussian with std `1/sqrt(n)`.
    pub fn new(
        w0: Matrix,
        rank: usize,
        alpha: f64,
        scaling: LoraScaling,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (m, n) = w0.shape();
        if rank == 0 || rank > m.min(n) {
            return Err(Error::Domain(format!(
                "lora rank {rank} must lie in 1..={} for a {m}x{n} base",
                m.min(n)
            )));
        }
        let a = gaussian_matrix(rng, rank, n, 1.0 / (n as f64).sqrt());
        Self::from_parts(w0, Matrix::zeros(m, rank), a, alpha, scaling)
    }

    pub fn from_parts(
        w0: Matrix,
        b: Matrix,
        a: Matrix,
        alpha: f64,
        scaling: LoraScaling,
    ) -> Result<Self> {
        let (m, n) = w0.shape();
        let r = a.rows();
        if b.shape() != (m, r) {
            return Err(Error::ShapeMismatch {
                op: "lora B factor",
                expected: (m, r),
                got: b.shape(),
            });
        }
        if a.cols() != n {
            return Err(Error::ShapeMismatch {
                op: "lora A factor",
                expected: (r, n),
                got: a.shape(),
            });
        }
        if r > m.min(n) {
            return Err(Error::Domain(format!("lora rank {r} exceeds min({m}, {n})")));
        }
        if !alpha.is_finite() {
            return Err(Error::Domain("lora alpha must be finite".into()));
        }
        Ok(Self {
            w0,
            b,
            a,
            alpha,
            scaling,
            a_trainable: true,
        })
    }

    /// Freezes `A` (fixed-subspace surrogate).
    pub fn with_frozen_a(mut self) -> Self {
        self.a_trainable = false;
        self
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn scale(&self) -> f64 {
        self.scaling.factor(self.alpha, self.rank())
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn a_trainable(&self) -> bool {
        self.a_trainable
    }

    pub fn set_b(&mut self, b: Matrix) -> Result<()> {
        self.b.check_same_shape("lora set_b", &b)?;
        self.b = b;
        Ok(())
    }

    pub fn set_a(&mut self, a: Matrix) -> Result<()> {
        self.a.check_same_shape("lora set_a", &a)?;
        self.a = a;
        Ok(())
    }

    /// `s * B A`.
    pub fn delta(&self) -> Matrix {
        self.b
            .matmul(&self.a)
            .expect("factor shapes checked at construction")
            .scale(self.scale())
    }

    /// Effective weight `W0 + s * B A`.
    pub fn forward(&self) -> Matrix {
        if self.b.is_zero() {
            return self.w0.clone();
        }
        self.w0.add(&self.delta()).expect("shapes checked at construction")
    }

    /// Chain rule through the adapter: `(s G A^T, s B^T G)`.
    /// The second factor is still returned when `A` is frozen; callers skip it.
    pub fn grads(&self, d_loss_d_w: &Matrix) -> Result<(Matrix, Matrix)> {
        self.w0.check_same_shape("lora_grads", d_loss_d_w)?;
        let s = self.scale();
        let d_b = d_loss_d_w.matmul(&self.a.transpose())?.scale(s);
        let d_a = self.b.transpose().matmul(d_loss_d_w)?.scale(s);
        Ok((d_b, d_a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn base() -> Matrix {
        Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0]]).unwrap()
    }

    #[test]
    fn zero_b_gives_base_weights_exactly() {
        let adapter = LoraAdapter::new(base(), 2, 8.0, LoraScaling::Classic, &mut seeded(1)).unwrap();
        assert_eq!(adapter.forward(), base());
        assert!(adapter.delta().is_zero());
    }

    #[test]
    fn scaling_rules() {
        assert_eq!(LoraScaling::Classic.factor(8.0, 4), 2.0);
        assert_eq!(LoraScaling::Rs.factor(8.0, 4), 4.0);
    }

    #[test]
    fn delta_is_linear_in_b() {
        let a = Matrix::from_rows(&[&[1.0, 0.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.5], &[2.0]]).unwrap();
        let one = LoraAdapter::from_parts(base(), b.clone(), a.clone(), 3.0, LoraScaling::Rs).unwrap();
        let two = LoraAdapter::from_parts(base(), b.scale(2.0), a, 3.0, LoraScaling::Rs).unwrap();
        assert_eq!(two.delta(), one.delta().scale(2.0));
    }

    #[test]
    fn rank_mismatch_is_rejected() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 1);
        assert!(matches!(
            LoraAdapter::from_parts(base(), b, a, 1.0, LoraScaling::Classic),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(LoraAdapter::new(base(), 3, 1.0, LoraScaling::Classic, &mut seeded(0)).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_factor_gradients() {
        let adapter = LoraAdapter::new(base(), 1, 1.0, LoraScaling::Classic, &mut seeded(2)).unwrap();
        let (db, da) = adapter.grads(&Matrix::zeros(2, 3)).unwrap();
        assert!(db.is_zero() && da.is_zero());
    }

    #[test]
    fn zero_b_gives_zero_a_gradient() {
        let adapter = LoraAdapter::new(base(), 2, 4.0, LoraScaling::Classic, &mut seeded(3)).unwrap();
        let g = Matrix::from_rows(&[&[1.0, -1.0, 2.0], &[0.3, 0.2, 0.1]]).unwrap();
        let (db, da) = adapter.grads(&g).unwrap();
        assert!(da.is_zero());
        assert!(!db.is_zero());
    }
}
