use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{l1_norm, l2_norm, sign, Matrix};
use crate::rng::uniform_vec;

/// `L(W) = 1/2 ||W x - y||^2` with initial weight `W0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: Vec<f64>,
    y: Vec<f64>,
    w0: Matrix,
}

impl RegressionProblem {
    /// Problem started from `W0 = 0`.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_vector("x", &x)?;
        check_vector("y", &y)?;
        if l1_norm(&x) == 0.0 {
            return Err(Error::Domain("regression input x must be nonzero".into()));
        }
        let w0 = Matrix::zeros(y.len(), x.len());
        Ok(Self { x, y, w0 })
    }

    pub fn with_init(mut self, w0: Matrix) -> Result<Self> {
        let expected = (self.y.len(), self.x.len());
        if w0.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "regression init",
                expected,
                got: w0.shape(),
            });
        }
        self.w0 = w0;
        Ok(self)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.y.len(), self.x.len())
    }

    /// `W x - y`.
    pub fn residual(&self, w: &Matrix) -> Result<Vec<f64>> {
        let wx = w.apply(&self.x)?;
        if wx.len() != self.y.len() {
            return Err(Error::ShapeMismatch {
                op: "regression residual",
                expected: self.shape(),
                got: w.shape(),
            });
        }
        Ok(wx.iter().zip(&self.y).map(|(a, b)| a - b).collect())
    }

    pub fn loss(&self, w: &Matrix) -> Result<f64> {
        let r = self.residual(w)?;
        Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>())
    }

    /// `r0 = y - W0 x`, the target the correction `W - W0` has to fit.
    pub fn initial_residual(&self) -> Vec<f64> {
        let w0x = self.w0.apply(&self.x).expect("shape checked at construction");
        self.y.iter().zip(&w0x).map(|(y, p)| y - p).collect()
    }

    /// Limit of SignGD started at `W0`.
    pub fn signgd_limit(&self) -> Result<Matrix> {
        self.w0.add(&signgd_solution(&self.x, &self.initial_residual())?)
    }

    /// Limit of idealized Muon started at `W0`. Equals `W0` when `W0` already fits.
    pub fn muon_limit(&self) -> Result<Matrix> {
        let r0 = self.initial_residual();
        if l2_norm(&r0) == 0.0 {
            return Ok(self.w0.clone());
        }
        self.w0.add(&muon_solution(&self.x, &r0)?)
    }
}

/// Fine-tuning example `(z, b)` on top of a pretrained `W0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProblem {
    z: Vec<f64>,
    b: Vec<f64>,
    w0: Matrix,
    r0: Vec<f64>,
}

impl ResidualProblem {
    pub fn new(w0: Matrix, z: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let regression = RegressionProblem::new(z.clone(), b.clone())?.with_init(w0.clone())?;
        let r0 = regression.initial_residual();
        Ok(Self { z, b, w0, r0 })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    /// `b - W0 z`.
    pub fn r0(&self) -> &[f64] {
        &self.r0
    }

    /// The same objective as a regression problem in `W`, started at `W0`.
    pub fn as_regression(&self) -> RegressionProblem {
        RegressionProblem {
            x: self.z.clone(),
            y: self.b.clone(),
            w0: self.w0.clone(),
        }
    }

    /// `r0 sign(z)^T / ||z||_1`.
    pub fn signgd_correction(&self) -> Result<Matrix> {
        signgd_solution(&self.z, &self.r0)
    }

    /// `r0 z^T / ||z||_2^2`.
    pub fn muon_correction(&self) -> Result<Matrix> {
        muon_solution(&self.z, &self.r0)
    }
}

/// `(W x - y) x^T`.
pub fn regression_grad(w: &Matrix, problem: &RegressionProblem) -> Result<Matrix> {
    Matrix::outer(&problem.residual(w)?, &problem.x)
}

/// Minimum max-norm interpolant `y sign(x)^T / ||x||_1`.
pub fn signgd_solution(x: &[f64], y: &[f64]) -> Result<Matrix> {
    check_vector("x", x)?;
    check_vector("y", y)?;
    let l1 = l1_norm(x);
    if l1 == 0.0 {
        return Err(Error::Domain("signgd solution needs x != 0".into()));
    }
    let sx: Vec<f64> = x.iter().map(|&v| sign(v) / l1).collect();
    Matrix::outer(y, &sx)
}

/// Minimum spectral-norm interpolant `y x^T / ||x||_2^2`.
pub fn muon_solution(x: &[f64], y: &[f64]) -> Result<Matrix> {
    check_vector("x", x)?;
    check_vector("y", y)?;
    if l2_norm(x) == 0.0 || l2_norm(y) == 0.0 {
        return Err(Error::Domain("muon solution needs x != 0 and y != 0".into()));
    }
    let sq: f64 = x.iter().map(|v| v * v).sum();
    let xs: Vec<f64> = x.iter().map(|v| v / sq).collect();
    Matrix::outer(y, &xs)
}

/// Entries uniform in `[-1, 1]`; `x` is redrawn while `||x||_1 < 0.1`.
pub fn random_problem(rng: &mut impl Rng, m: usize, n: usize) -> RegressionProblem {
    let x = loop {
        let x = uniform_vec(rng, n, -1.0, 1.0);
        if l1_norm(&x) >= 0.1 {
            break x;
        }
    };
    let y = uniform_vec(rng, m, -1.0, 1.0);
    RegressionProblem::new(x, y).expect("sampled inputs are valid")
}

fn check_vector(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Domain(format!("{name} must be non-empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{name} has non-finite entries")));
    }
    Ok(())
}
