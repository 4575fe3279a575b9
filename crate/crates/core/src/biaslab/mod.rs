//! Implicit-bias laboratory: underdetermined regression `L(W) = 1/2 ||Wx - y||^2`,
//! the closed-form limits of SignGD and idealized Muon, the scalar sign
//! recurrence behind their convergence, and drivers that run the optimizers
//! against those limits.

mod descent;
mod problem;

pub use descent::{
    lemma_recurrence, run_descent, DescentConfig, DescentOutcome, ScalarTrajectory, Target,
    Trajectory, TrajectoryRecord,
};
pub use problem::{
    muon_solution, random_problem, regression_grad, signgd_solution, RegressionProblem,
    ResidualProblem,
};
