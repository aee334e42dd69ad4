//! Stochastic subgradient descent on the exact penalty `τf(x) + ‖c(x)‖₁` with
//! a fixed `τ` and non-adaptive steps `β_k τ/(τL+Γ)`. Used as the comparison
//! method.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::metrics::lenient_error_pair;
use crate::oracles::StochasticOracle;
use crate::problems::ProblemOracle;
use crate::record::IterateRecord;
use crate::rng::StreamKey;
use crate::schedule::BetaSchedule;

/// `τ ∈ {10⁻⁶, …, 10⁰}` by decades.
pub const TAU_SWEEP: [f64; 7] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// When the run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Iterations(u64),
    /// Stop once the cumulative oracle-call count reaches the value.
    OracleCalls(u64),
    WallClock(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradConfig {
    pub tau: f64,
    pub lip_l: f64,
    pub lip_gamma: f64,
    pub budget: Budget,
}

impl SubgradConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lip_l > 0.0) || !(self.lip_gamma >= 0.0) {
            return Err(Error::InvalidParameter("need L > 0 and Gamma >= 0".into()));
        }
        Ok(())
    }

    pub fn step(&self, beta_k: f64) -> f64 {
        beta_k * self.tau / (self.tau * self.lip_l + self.lip_gamma)
    }
}

/// `τḡ + j̄ᵀ sign(c̄)` with `sign(0) = 0`.
pub fn subgradient(tau: f64, gbar: &Vector, cbar: &Vector, jbar: &Matrix) -> Vector {
    let signs = cbar.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
    gbar * tau + jbar.tr_mul(&signs)
}

/// `τf(x) + ‖c(x)‖₁` with the exact oracle.
pub fn penalty(problem: &dyn ProblemOracle, x: &Vector, tau: f64) -> f64 {
    tau * problem.objective(x) + problem.constraints(x).lp_norm(1)
}

pub fn run_subgradient(
    problem: &dyn ProblemOracle,
    oracle: &dyn StochasticOracle,
    cfg: &SubgradConfig,
    schedule: &BetaSchedule,
    stream: &StreamKey,
) -> Result<Vec<IterateRecord>> {
    cfg.validate()?;
    schedule.validate()?;
    let started = Instant::now();
    let mut x = problem.initial_point();
    let mut records = Vec::new();
    let mut calls = 0u64;
    let mut k = 0u64;
    loop {
        let done = match cfg.budget {
            Budget::Iterations(n) => k >= n,
            Budget::OracleCalls(n) => calls >= n,
            Budget::WallClock(limit) => started.elapsed() >= limit,
        };
        if done {
            return Ok(records);
        }
        k += 1;
        let beta_k = schedule.beta(k);
        let est = oracle.estimate(&x, k, beta_k, stream)?;
        calls += u64::from(est.draws);
        let s = subgradient(cfg.tau, &est.gbar, &est.cbar, &est.jbar);
        let alpha = cfg.step(beta_k);
        let errors = lenient_error_pair(problem, &x)?;
        records.push(IterateRecord {
            k,
            x: x.iter().cloned().collect(),
            beta: beta_k,
            alpha,
            d_norm_sq: s.norm_squared(),
            feas_err: errors.feas,
            stat_err: errors.stat,
            oracle_calls: calls,
            sqp: None,
        });
        x -= s * alpha;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subgradient iterate"));
        }
    }
}
