//! Stochastic sequential quadratic programming for equality-constrained
//! problems whose objective and constraints are only available through noisy
//! or sampled estimates.
//!
//! The solver ([`sqp::SqpSolver`]) adapts a merit parameter and a ratio
//! parameter each iteration and picks its step inside a bracket derived from a
//! piecewise-quadratic decrease certificate. Around it sit the estimate
//! generators ([`oracles`]), an analytic test suite and a constrained logistic
//! regression problem ([`problems`]), a subgradient baseline
//! ([`subgradient`]), error metrics ([`metrics`]) and a sweep runner
//! ([`harness`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod problems;
pub mod record;
pub mod rng;
pub mod schedule;
pub mod sqp;
pub mod subgradient;

pub use error::{Error, Result};
