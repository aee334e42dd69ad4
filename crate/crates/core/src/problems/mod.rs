//! Deterministic problem oracles: the built-in analytic suite, the constrained
//! logistic-regression problem, LIBSVM ingestion and Lipschitz estimation.

mod builtin;
mod libsvm;
mod lipschitz;
mod logistic;

pub use builtin::{builtin_problem, Builtin, BUILTIN_NAMES};
pub use libsvm::{emit_libsvm, parse_libsvm, read_libsvm_file, Dataset};
pub use lipschitz::{estimate_lipschitz, LipschitzEstimate, LipschitzMethod};
pub use logistic::{build_logistic_problem, synthetic_dataset, ConstraintPool, LogisticProblem, LogisticProblemConfig};

use crate::linalg::{Matrix, Vector};

/// Exact evaluator of `f`, `∇f`, `c` and `∇cᵀ` for `min f(x) s.t. c(x) = 0`.
pub trait ProblemOracle: Send + Sync {
    fn name(&self) -> &str;
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn objective(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn constraints(&self, x: &Vector) -> Vector;
    /// The `m×n` constraint Jacobian.
    fn jacobian(&self, x: &Vector) -> Matrix;
    fn initial_point(&self) -> Vector;
    fn known_solution(&self) -> Option<Vector> {
        None
    }
    /// Γ when it is known in closed form (sum of constraint-Hessian norms).
    fn analytic_gamma(&self) -> Option<f64> {
        None
    }
}

/// Largest relative discrepancy between `∇f` / Jacobian rows and central differences.
pub fn finite_difference_error(problem: &dyn ProblemOracle, x: &Vector, step: f64) -> f64 {
    let n = problem.n();
    let grad = problem.gradient(x);
    let jac = problem.jacobian(x);
    let mut worst = 0.0_f64;
    let rel = |exact: f64, approx: f64| (exact - approx).abs() / (1.0 + exact.abs());
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let fd = (problem.objective(&xp) - problem.objective(&xm)) / (2.0 * step);
        worst = worst.max(rel(grad[j], fd));
        let cp = problem.constraints(&xp);
        let cm = problem.constraints(&xm);
        for i in 0..problem.m() {
            worst = worst.max(rel(jac[(i, j)], (cp[i] - cm[i]) / (2.0 * step)));
        }
    }
    worst
}
