//! Sparse nonlinear programming: a primal-dual interior-point solver and a
//! finite-difference derivative checker.

mod check;
mod ipm;
pub mod kkt;

pub use check::{check_derivatives, DerivativeReport};
pub use ipm::{solve, solve_from, IpmOptions, NlpSolution, SolveStatus};

/// Smooth NLP of the form
/// `min f(x)  s.t.  c_lo <= c(x) <= c_hi,  x_lo <= x <= x_hi`.
///
/// Infinite bounds are allowed. Equal lower and upper bounds fix a variable or
/// make a row an equality. Sparse derivatives are given as value arrays
/// aligned with a structure that must not change between calls; Hessian
/// entries may come from either triangle and repeated positions are summed.
pub trait NlpProblem: Sync {
    fn num_vars(&self) -> usize;
    fn num_cons(&self) -> usize;
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], c: &mut [f64]);

    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    /// Structure of the Hessian of `sigma f + sum lambda_i c_i`.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    fn hessian_values(&self, x: &[f64], sigma: f64, lambda: &[f64], vals: &mut [f64]);
}
