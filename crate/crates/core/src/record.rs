use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

/// A positive real or `+∞`, kept as an explicit variant so trial parameters
/// never leak floating infinities into products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// `self ≥ value`, with `+∞` above every real.
    pub fn at_least(self, value: f64) -> bool {
        match self {
            Extended::Finite(v) => v >= value,
            Extended::Infinite => true,
        }
    }

    pub fn min_with(self, value: f64) -> f64 {
        match self {
            Extended::Finite(v) => v.min(value),
            Extended::Infinite => value,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::Infinite => f64::INFINITY,
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
            (Extended::Infinite, _) => Some(Ordering::Greater),
            (_, Extended::Infinite) => Some(Ordering::Less),
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

/// SQP-specific quantities of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqpTrace {
    pub tau: f64,
    pub tau_trial: Extended,
    pub xi: f64,
    pub xi_trial: Extended,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_phi: f64,
    /// `Δl = −τ ḡᵀd̄ + ‖c̄‖₁`.
    pub model_reduction: f64,
    /// `‖c̄‖₁`.
    pub cbar_l1: f64,
}

/// One logged iteration. `x` is the iterate the step was computed at and the
/// error fields are evaluated there with the exact oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: u64,
    pub x: Vec<f64>,
    pub beta: f64,
    pub alpha: f64,
    /// `‖d̄‖²` (the subgradient for the baseline method).
    pub d_norm_sq: f64,
    /// `‖c(x)‖_∞`.
    pub feas_err: f64,
    /// `‖∇f(x) + ∇c(x)·y_LS‖_∞`.
    pub stat_err: f64,
    /// Cumulative stochastic-oracle evaluations including this iteration.
    pub oracle_calls: u64,
    /// `None` for methods without SQP parameters.
    pub sqp: Option<SqpTrace>,
}

impl IterateRecord {
    pub fn point(&self) -> Vector {
        Vector::from_row_slice(&self.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_ordering() {
        assert!(Extended::Infinite > Extended::Finite(1e300));
        assert!(Extended::Finite(1.0) < Extended::Finite(2.0));
        assert!(Extended::Infinite.at_least(f64::MAX));
        assert_eq!(Extended::Infinite.min_with(3.0), 3.0);
        assert_eq!(Extended::Finite(2.0).min_with(3.0), 2.0);
        assert_eq!(Extended::Infinite.to_string(), "inf");
        let json = serde_json::to_string(&Extended::Infinite).unwrap();
        assert_eq!(serde_json::from_str::<Extended>(&json).unwrap(), Extended::Infinite);
    }
}
