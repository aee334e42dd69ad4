//! Stochastic SQP with adaptive step-size selection.
//!
//! Each iteration solves the Newton-SQP system with the current estimates,
//! updates the merit parameter `τ̄` and the ratio parameter `ξ̄`, brackets the
//! step in `[ᾱ^min, ᾱ^max]` using the piecewise-quadratic certificate `φ`, and
//! moves `x ← x + ᾱ d̄`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigen_bounds, solve_kkt, KktSystem, Matrix, Vector};
use crate::metrics::{check_iteration_invariants, error_pair};
use crate::oracles::{StochasticEstimate, StochasticOracle};
use crate::problems::ProblemOracle;
use crate::record::{Extended, IterateRecord, SqpTrace};
use crate::rng::StreamKey;
use crate::schedule::BetaSchedule;

/// Growth factor of the geometric step search.
pub const STEP_GROWTH: f64 = 1.1;
/// Relative slack on the step ordering `ᾱ^min ≤ ᾱ^max ≤ ᾱ^φ`.
const ORDER_SLACK: f64 = 1e-12;
/// Direction treated as zero when `‖d̄‖_∞ ≤ ZERO_STEP·(1 + ‖x‖_∞)`.
const ZERO_STEP: f64 = 1e-12;

/// How `ᾱ_k` is picked inside `[ᾱ^min, ᾱ^max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    /// Largest `1.1^t·ᾱ^min` with `φ ≤ 0` inside the interval.
    #[default]
    Geometric,
    /// Always `ᾱ^min`.
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqpParams {
    pub tau0: f64,
    pub xi0: f64,
    pub eta: f64,
    pub sigma: f64,
    pub eps_tau: f64,
    pub eps_xi: f64,
    pub theta: f64,
    /// Lipschitz constant `L` of `∇f`.
    pub lip_l: f64,
    /// Lipschitz constant `Γ` of `∇c`.
    pub lip_gamma: f64,
    /// Lower eigenvalue bound `ζ` asserted on `H_k`.
    pub zeta: f64,
    /// Upper eigenvalue bound `κ_H` asserted on `H_k`.
    pub kappa_h: f64,
    pub max_iter: u64,
    pub step_policy: StepPolicy,
}

impl Default for SqpParams {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            xi0: 1.0,
            eta: 0.5,
            sigma: 0.1,
            eps_tau: 0.01,
            eps_xi: 0.01,
            theta: 10.0,
            lip_l: 1.0,
            lip_gamma: 1.0,
            zeta: 1.0,
            kappa_h: 1e6,
            max_iter: 5000,
            step_policy: StepPolicy::Geometric,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl SqpParams {
    pub fn validate(&self) -> Result<()> {
        open_unit("eta", self.eta)?;
        open_unit("sigma", self.sigma)?;
        open_unit("eps_tau", self.eps_tau)?;
        open_unit("eps_xi", self.eps_xi)?;
        let positive = [("tau0", self.tau0), ("xi0", self.xi0), ("lip_l", self.lip_l), ("zeta", self.zeta)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.theta >= 0.0) || !(self.lip_gamma >= 0.0) {
            return Err(Error::InvalidParameter("theta and lip_gamma must be nonnegative".into()));
        }
        if !(self.kappa_h >= self.zeta) {
            return Err(Error::InvalidParameter("need zeta <= kappa_h".into()));
        }
        Ok(())
    }

    /// `τL + Γ`.
    pub fn curvature(&self, tau: f64) -> f64 {
        tau * self.lip_l + self.lip_gamma
    }

    /// Checks `2(1−η)β_k ξ̄₀τ̄₀/(τ̄₀L+Γ) ∈ (0, 1]` for every `k ≤ max_iter`.
    pub fn validate_schedule(&self, schedule: &BetaSchedule) -> Result<()> {
        schedule.validate()?;
        let scale = 2.0 * (1.0 - self.eta) * self.xi0 * self.tau0 / self.curvature(self.tau0);
        for k in 1..=self.max_iter.max(1) {
            let beta = schedule.beta(k);
            let v = scale * beta;
            if !(beta > 0.0 && beta <= 1.0 && v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "beta_{k} = {beta} violates the step-size requirement (value {v})"
                )));
            }
        }
        Ok(())
    }
}

/// Iterate and adaptive parameters carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vector,
    pub tau: f64,
    pub xi: f64,
    /// Number of completed iterations.
    pub k: u64,
}

impl SolverState {
    pub fn initial(x1: Vector, params: &SqpParams) -> Self {
        Self { x: x1, tau: params.tau0, xi: params.xi0, k: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInterval {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_phi: f64,
    pub beta_k: f64,
}

/// `Δl = −τ ḡᵀd̄ + ‖c̄‖₁`, valid for directions with `c̄ + j̄d̄ = 0`.
pub fn model_reduction(tau: f64, gbar: &Vector, cbar: &Vector, dbar: &Vector) -> f64 {
    -tau * gbar.dot(dbar) + cbar.lp_norm(1)
}

/// `+∞` when `ḡᵀd̄ + ½d̄ᵀHd̄ ≤ 0`, otherwise `(1−σ)‖c̄‖₁ / (ḡᵀd̄ + ½d̄ᵀHd̄)`.
pub fn trial_merit_parameter(gbar: &Vector, dbar: &Vector, h: &Matrix, cbar: &Vector, sigma: f64) -> Extended {
    let denom = gbar.dot(dbar) + 0.5 * dbar.dot(&(h * dbar));
    if denom <= 0.0 {
        Extended::Infinite
    } else {
        Extended::Finite((1.0 - sigma) * cbar.lp_norm(1) / denom)
    }
}

pub fn update_merit_parameter(tau_prev: f64, tau_trial: Extended, eps_tau: f64) -> f64 {
    match tau_trial {
        Extended::Infinite => tau_prev,
        Extended::Finite(trial) => {
            if tau_prev <= (1.0 - eps_tau) * trial {
                tau_prev
            } else {
                (1.0 - eps_tau) * tau_prev.min(trial)
            }
        }
    }
}

/// `Δl / (τ‖d̄‖²)`, or `+∞` for a zero direction.
pub fn trial_ratio(delta_l: f64, tau: f64, dbar_norm_sq: f64) -> Extended {
    if dbar_norm_sq == 0.0 {
        Extended::Infinite
    } else {
        Extended::Finite(delta_l / (tau * dbar_norm_sq))
    }
}

pub fn update_ratio(xi_prev: f64, xi_trial: Extended, eps_xi: f64) -> f64 {
    if xi_trial.at_least(xi_prev) {
        xi_prev
    } else {
        xi_trial.min_with((1.0 - eps_xi) * xi_prev)
    }
}

/// The sufficient-decrease certificate
///
/// ```text
/// φ(α) = (η−1)·α·β·Δl + (|1−α| − (1−α))·‖c̄‖₁ + ½(τL+Γ)·α²·‖d̄‖²
/// ```
///
/// a convex function that is quadratic on `α ≤ 1` and on `α ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiModel {
    pub eta: f64,
    pub beta: f64,
    pub delta_l: f64,
    pub cbar_l1: f64,
    /// `τL + Γ`.
    pub curvature: f64,
    pub d_norm_sq: f64,
}

impl PhiModel {
    pub fn eval(&self, alpha: f64) -> f64 {
        let [a, b, c] = self.terms(alpha);
        a + b + c
    }

    /// The three summands of `φ(α)`.
    fn terms(&self, alpha: f64) -> [f64; 3] {
        [
            (self.eta - 1.0) * alpha * self.beta * self.delta_l,
            ((1.0 - alpha).abs() - (1.0 - alpha)) * self.cbar_l1,
            0.5 * self.curvature * alpha * alpha * self.d_norm_sq,
        ]
    }

    /// Magnitude scale of `φ` at `alpha`, for relative tolerances.
    pub fn scale(&self, alpha: f64) -> f64 {
        self.terms(alpha).iter().map(|t| t.abs()).sum()
    }

    /// Largest positive root in closed form. Requires `‖d̄‖² > 0` and `Δl > 0`.
    fn closed_form_root(&self) -> f64 {
        let quad = 0.5 * self.curvature * self.d_norm_sq;
        let slope = (1.0 - self.eta) * self.beta * self.delta_l;
        let first = slope / quad;
        if first < 1.0 {
            return first;
        }
        // φ(1) ≤ 0: the root lies on the α ≥ 1 piece  quad·α² + b·α − 2c̄₁ = 0
        let b = 2.0 * self.cbar_l1 - slope;
        let c = 2.0 * self.cbar_l1;
        let disc = (b * b + 4.0 * quad * c).sqrt();
        if b > 0.0 {
            2.0 * c / (b + disc)
        } else {
            (disc - b) / (2.0 * quad)
        }
    }

    fn verified(&self, alpha: f64) -> bool {
        alpha.is_finite() && alpha > 0.0 && self.eval(alpha).abs() <= 1e-10 * (1.0 + self.scale(alpha))
    }

    /// Fallback: bisection between an interior point where `φ < 0` and `10⁶`.
    fn bisect_root(&self) -> Result<f64> {
        let quad = 0.5 * self.curvature * self.d_norm_sq;
        let slope = (1.0 - self.eta) * self.beta * self.delta_l;
        let mut lo = (0.5 * slope / quad).min(1.0);
        let mut hi = 1e6;
        if !(self.eval(lo) < 0.0) || !(self.eval(hi) > 0.0) {
            return Err(Error::NonConvergent);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if self.verified(lo) {
            Ok(lo)
        } else {
            Err(Error::NonConvergent)
        }
    }

    /// `max{α > 0 : φ(α) ≤ 0}` for a nonzero direction.
    pub fn largest_root(&self) -> Result<f64> {
        let inputs = [self.eta, self.beta, self.delta_l, self.cbar_l1, self.curvature, self.d_norm_sq];
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phi inputs"));
        }
        if !(self.d_norm_sq > 0.0 && self.curvature > 0.0 && self.delta_l > 0.0) {
            return Err(Error::NonConvergent);
        }
        let root = self.closed_form_root();
        if self.verified(root) {
            Ok(root)
        } else {
            self.bisect_root()
        }
    }
}

/// `ᾱ^φ`; for a zero direction the fallback value `ᾱ^min + θβ_k`.
pub fn alpha_phi(phi: &PhiModel, alpha_min: f64, theta: f64) -> Result<f64> {
    if phi.d_norm_sq == 0.0 {
        Ok(alpha_min + theta * phi.beta)
    } else {
        phi.largest_root()
    }
}

/// `ᾱ^min = 2(1−η)β_k ξ̄τ̄/(τ̄L+Γ)`.
pub fn alpha_min(params: &SqpParams, beta_k: f64, tau: f64, xi: f64) -> f64 {
    2.0 * (1.0 - params.eta) * beta_k * xi * tau / params.curvature(tau)
}

/// Brackets the step for an iteration whose parameters were already updated.
pub fn step_interval(params: &SqpParams, state: &SolverState, phi: &PhiModel) -> Result<StepInterval> {
    let beta_k = phi.beta;
    let a_min = alpha_min(params, beta_k, state.tau, state.xi);
    let cap = a_min + params.theta * beta_k;
    if phi.d_norm_sq == 0.0 {
        return Ok(StepInterval { alpha_min: a_min, alpha_max: cap, alpha_phi: cap, beta_k });
    }
    let mut a_phi = phi.largest_root()?;
    if a_phi < a_min {
        if a_min - a_phi > ORDER_SLACK * a_min {
            return Err(Error::InvariantViolated(format!(
                "step ordering: alpha_min {a_min:e} exceeds alpha_phi {a_phi:e}"
            )));
        }
        // rounding in the root; the exact values satisfy alpha_min <= alpha_phi
        a_phi = a_min;
    }
    let a_max = cap.min(a_phi);
    if !(a_min > 0.0 && a_min <= a_max && a_max <= a_phi) {
        return Err(Error::InvariantViolated(format!(
            "step ordering: {a_min:e} <= {a_max:e} <= {a_phi:e} fails"
        )));
    }
    Ok(StepInterval { alpha_min: a_min, alpha_max: a_max, alpha_phi: a_phi, beta_k })
}

/// Geometric scan `1.1^t·ᾱ^min`, `t = 0, 1, …`, returning the last point that
/// keeps `φ ≤ 0` and stays at or below `ᾱ^max`.
pub fn select_alpha(interval: &StepInterval, policy: StepPolicy, phi: impl Fn(f64) -> f64) -> f64 {
    let base = interval.alpha_min;
    if policy == StepPolicy::Min || base >= interval.alpha_max {
        return base;
    }
    let mut best = base;
    let mut t = 1;
    loop {
        let candidate = base * STEP_GROWTH.powi(t);
        if candidate > interval.alpha_max || phi(candidate) > 0.0 {
            return best;
        }
        best = candidate;
        t += 1;
    }
}

/// Returned by [`SqpSolver::run`] when an iteration fails; keeps the log so far.
#[derive(Debug)]
pub struct RunAborted {
    pub records: Vec<IterateRecord>,
    pub error: Error,
}

impl std::fmt::Display for RunAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted after {} iterations: {}", self.records.len(), self.error)
    }
}

impl std::error::Error for RunAborted {}

/// Algorithm driver; `H_k = I` unless a constant matrix is supplied.
#[derive(Debug, Clone)]
pub struct SqpSolver {
    pub params: SqpParams,
    pub schedule: BetaSchedule,
    hessian: Option<Matrix>,
    /// Evaluate the per-iteration lemma checks and abort on violation.
    pub check_invariants: bool,
}

impl SqpSolver {
    pub fn new(params: SqpParams, schedule: BetaSchedule) -> Result<Self> {
        params.validate()?;
        params.validate_schedule(&schedule)?;
        if !(params.zeta <= 1.0 && params.kappa_h >= 1.0) {
            return Err(Error::InvalidParameter("H = I requires zeta <= 1 <= kappa_h".into()));
        }
        Ok(Self { params, schedule, hessian: None, check_invariants: true })
    }

    /// Uses a constant `H_k = h`, checked against `[ζ, κ_H]`.
    pub fn with_hessian(mut self, h: Matrix) -> Result<Self> {
        self.check_hessian(&h)?;
        self.hessian = Some(h);
        Ok(self)
    }

    fn check_hessian(&self, h: &Matrix) -> Result<()> {
        let (lo, hi) = eigen_bounds(h)?;
        if lo < self.params.zeta * (1.0 - 1e-12) || hi > self.params.kappa_h * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "H eigenvalues [{lo:e}, {hi:e}] outside [zeta, kappa_h] = [{}, {}]",
                self.params.zeta, self.params.kappa_h
            )));
        }
        Ok(())
    }

    fn hessian_for(&self, n: usize) -> Matrix {
        match &self.hessian {
            Some(h) => h.clone(),
            None => Matrix::identity(n, n),
        }
    }

    /// One iteration at `state.x` with the given estimates. The returned record's
    /// error fields use the exact oracle of `problem`.
    pub fn iterate(
        &self,
        problem: &dyn ProblemOracle,
        state: &SolverState,
        estimate: &StochasticEstimate,
        h: &Matrix,
    ) -> Result<(SolverState, IterateRecord)> {
        let p = &self.params;
        if h.nrows() != state.x.len() {
            return Err(Error::DimensionMismatch(format!("H is {}x{}", h.nrows(), h.ncols())));
        }
        if self.hessian.as_ref() != Some(h) && *h != Matrix::identity(h.nrows(), h.ncols()) {
            self.check_hessian(h)?;
        }
        let k = state.k + 1;
        let beta_k = self.schedule.beta(k);
        let sys = KktSystem::new(h.clone(), estimate.jbar.clone(), estimate.gbar.clone(), estimate.cbar.clone())?;
        let mut d = solve_kkt(&sys)?.d;
        if d.amax() <= ZERO_STEP * (1.0 + state.x.amax()) {
            d.fill(0.0);
        }
        let cbar_l1 = estimate.cbar.lp_norm(1);
        let mut merit = None;
        if d.norm_squared() > 0.0 {
            let trial = trial_merit_parameter(&estimate.gbar, &d, h, &estimate.cbar, p.sigma);
            let tau = update_merit_parameter(state.tau, trial, p.eps_tau);
            let delta_l = model_reduction(tau, &estimate.gbar, &estimate.cbar, &d);
            // a direction whose model reduction rounds to zero is below working precision
            if delta_l > 0.0 {
                merit = Some((trial, tau, delta_l));
            } else {
                d.fill(0.0);
            }
        }
        let d_norm_sq = d.norm_squared();

        let (tau, tau_trial, xi, xi_trial, delta_l, interval, alpha);
        if let Some((trial, new_tau, reduction)) = merit {
            (tau_trial, tau, delta_l) = (trial, new_tau, reduction);
            xi_trial = trial_ratio(delta_l, tau, d_norm_sq);
            xi = update_ratio(state.xi, xi_trial, p.eps_xi);
            let phi = PhiModel { eta: p.eta, beta: beta_k, delta_l, cbar_l1, curvature: p.curvature(tau), d_norm_sq };
            let updated = SolverState { x: state.x.clone(), tau, xi, k };
            interval = step_interval(p, &updated, &phi)?;
            alpha = select_alpha(&interval, p.step_policy, |a| phi.eval(a));
        } else {
            tau = state.tau;
            xi = state.xi;
            tau_trial = Extended::Infinite;
            xi_trial = Extended::Infinite;
            delta_l = model_reduction(tau, &estimate.gbar, &estimate.cbar, &d);
            let a_min = alpha_min(p, beta_k, tau, xi);
            let cap = a_min + p.theta * beta_k;
            interval = StepInterval { alpha_min: a_min, alpha_max: cap, alpha_phi: cap, beta_k };
            alpha = a_min;
        }

        let errors = error_pair(problem, &state.x)?;
        let record = IterateRecord {
            k,
            x: state.x.iter().cloned().collect(),
            beta: beta_k,
            alpha,
            d_norm_sq,
            feas_err: errors.feas,
            stat_err: errors.stat,
            oracle_calls: 0,
            sqp: Some(SqpTrace {
                tau,
                tau_trial,
                xi,
                xi_trial,
                alpha_min: interval.alpha_min,
                alpha_max: interval.alpha_max,
                alpha_phi: interval.alpha_phi,
                model_reduction: delta_l,
                cbar_l1,
            }),
        };
        if self.check_invariants {
            let violations = check_iteration_invariants(&record, p);
            if !violations.is_empty() {
                let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(Error::InvariantViolated(format!("iteration {k}: {}", text.join("; "))));
            }
        }
        let next = SolverState { x: &state.x + &d * alpha, tau, xi, k };
        Ok((next, record))
    }

    /// Runs `max_iter` iterations from `problem.initial_point()`.
    pub fn run(
        &self,
        problem: &dyn ProblemOracle,
        oracle: &dyn StochasticOracle,
        stream: &StreamKey,
    ) -> std::result::Result<Vec<IterateRecord>, RunAborted> {
        let h = self.hessian_for(problem.n());
        let mut state = SolverState::initial(problem.initial_point(), &self.params);
        let mut records = Vec::with_capacity(self.params.max_iter as usize);
        let mut calls = 0u64;
        for _ in 0..self.params.max_iter {
            let k = state.k + 1;
            let step = oracle
                .estimate(&state.x, k, self.schedule.beta(k), stream)
                .and_then(|est| {
                    calls += u64::from(est.draws);
                    self.iterate(problem, &state, &est, &h)
                });
            match step {
                Ok((next, mut record)) => {
                    record.oracle_calls = calls;
                    records.push(record);
                    state = next;
                }
                Err(error) => return Err(RunAborted { records, error }),
            }
        }
        Ok(records)
    }
}
