use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::gaussian_matrix;

/// `f(x) = W2 relu(W1 x)` with `W1: h x d`, `W2: o x h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w1: Matrix,
    pub w2: Matrix,
}

/// Gradients of the mean squared error with respect to both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl Mlp {
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        if w2.cols() != w1.rows() {
            return Err(Error::ShapeMismatch {
                op: "mlp layers",
                expected: (w2.rows(), w1.rows()),
                got: w2.shape(),
            });
        }
        Ok(Self { w1, w2 })
    }

    /// Gaussian init with std `1/sqrt(fan_in)` per layer.
    pub fn random(rng: &mut impl Rng, d: usize, h: usize, o: usize) -> Self {
        let w1 = gaussian_matrix(rng, h, d, 1.0 / (d as f64).sqrt());
        let w2 = gaussian_matrix(rng, o, h, 1.0 / (h as f64).sqrt());
        Self { w1, w2 }
    }

    /// `(d, h, o)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.cols(), self.w1.rows(), self.w2.rows())
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.w2.is_finite()
    }

    /// Outputs for a batch stored as columns of `x` (`d x N`).
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.w2.matmul(&self.w1.matmul(x)?.map(relu))?)
    }

    /// `mean((f(X) - Y)^2)` over all `N * o` entries.
    pub fn loss(&self, x: &Matrix, y: &Matrix) -> Result<f64> {
        let diff = self.forward(x)?.sub(y)?;
        Ok(mean_square(&diff))
    }

    /// Loss and exact gradients by backpropagation.
    pub fn loss_and_grads(&self, x: &Matrix, y: &Matrix) -> Result<(f64, MlpGrads)> {
        let pre = self.w1.matmul(x)?;
        let act = pre.map(relu);
        let out = self.w2.matmul(&act)?;
        let diff = out.sub(y)?;
        let loss = mean_square(&diff);

        let count = (diff.rows() * diff.cols()) as f64;
        let d_out = diff.scale(2.0 / count);
        let d_w2 = d_out.matmul(&act.transpose())?;
        let d_act = self.w2.transpose().matmul(&d_out)?;
        let d_pre = d_act.hadamard(&pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))?;
        let d_w1 = d_pre.matmul(&x.transpose())?;
        Ok((loss, MlpGrads { w1: d_w1, w2: d_w2 }))
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn mean_square(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>() / (m.rows() * m.cols()) as f64
}

/// Worst Frobenius-relative error between analytic gradients and central
/// differences with step `eps`, over both layers.
pub fn gradient_check(model: &Mlp, x: &Matrix, y: &Matrix, eps: f64) -> Result<f64> {
    let (_, analytic) = model.loss_and_grads(x, y)?;
    let mut worst: f64 = 0.0;
    for layer in 0..2 {
        let (weights, grad) = match layer {
            0 => (&model.w1, &analytic.w1),
            _ => (&model.w2, &analytic.w2),
        };
        let mut numeric = Matrix::zeros(weights.rows(), weights.cols());
        for i in 0..weights.rows() {
            for j in 0..weights.cols() {
                let probe = |delta: f64| -> Result<f64> {
                    let mut m = model.clone();
                    let target = if layer == 0 { &mut m.w1 } else { &mut m.w2 };
                    target.set(i, j, weights.get(i, j) + delta);
                    m.loss(x, y)
                };
                numeric.set(i, j, (probe(eps)? - probe(-eps)?) / (2.0 * eps));
            }
        }
        let scale = grad.frobenius_norm().max(numeric.frobenius_norm());
        if scale > 0.0 {
            worst = worst.max(grad.sub(&numeric)?.frobenius_norm() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};

    #[test]
    fn forward_hand_value() {
        let w1 = Matrix::from_rows(&[&[1.0, -1.0], &[2.0, 0.0]]).unwrap();
        let w2 = Matrix::from_rows(&[&[1.0, 0.5]]).unwrap();
        let mlp = Mlp::new(w1, w2).unwrap();
        let x = Matrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        // hidden = relu([-1, 2]) = [0, 2]
        assert_eq!(mlp.forward(&x).unwrap().to_row_major(), vec![1.0]);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = seeded(11);
        let mlp = Mlp::random(&mut rng, 3, 4, 2);
        let x = gaussian_matrix(&mut rng, 3, 5, 1.0);
        let y = gaussian_matrix(&mut rng, 2, 5, 1.0);
        assert!(gradient_check(&mlp, &x, &y, 1e-6).unwrap() < 1e-4);
    }

    #[test]
    fn layer_mismatch_rejected() {
        assert!(Mlp::new(Matrix::zeros(4, 3), Matrix::zeros(2, 5)).is_err());
    }
}
