//! Unconstrained minimization and symmetric linear solves shared by the
//! objectives.

mod bfgs;
mod linalg;

pub use bfgs::{bfgs_minimize, BfgsOptions, FnObjective, Objective, OptimizerReport};
pub use linalg::{solve_spd, Cholesky, Matrix};
