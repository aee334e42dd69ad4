//! Stochastic estimates `(ḡ, c̄, j̄)` of `(∇f, c, ∇cᵀ)`: additive Gaussian noise
//! around a deterministic oracle, or mini-batches of a finite-sum problem.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{has_full_row_rank, Matrix, Vector};
use crate::problems::{LogisticProblem, ProblemOracle};
use crate::rng::{Component, StreamKey};

/// Resampling budget for a rank-deficient `j̄`.
pub const MAX_JACOBIAN_DRAWS: u8 = 10;

/// How target variances evolve with the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// `ρ = ε·β_k²`.
    #[default]
    Coupled,
    /// `ρ = ε` for every iteration.
    Raw,
    /// Each of `ρ_g, ρ_c, ρ_j` set to `(ω_ρ/3)²/k_max`, so their square roots sum
    /// to `ω_ρ/√k_max`. The `ε` values are ignored.
    Complexity { omega_rho: f64, k_max: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub eps_g: f64,
    pub eps_c: f64,
    pub eps_j: f64,
    #[serde(default)]
    pub mode: VarianceMode,
}

impl NoiseConfig {
    pub fn new(eps_g: f64, eps_c: f64, eps_j: f64, mode: VarianceMode) -> Result<Self> {
        let cfg = Self { eps_g, eps_c, eps_j, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn coupled(eps_g: f64, eps_c: f64, eps_j: f64) -> Result<Self> {
        Self::new(eps_g, eps_c, eps_j, VarianceMode::Coupled)
    }

    pub fn zero() -> Self {
        Self { eps_g: 0.0, eps_c: 0.0, eps_j: 0.0, mode: VarianceMode::Coupled }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.eps_g, self.eps_c, self.eps_j];
        if all.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidParameter(format!("noise levels must be finite and >= 0: {all:?}")));
        }
        if let VarianceMode::Complexity { omega_rho, k_max } = self.mode {
            if !(omega_rho > 0.0) || k_max == 0 {
                return Err(Error::InvalidParameter("complexity mode needs omega_rho > 0, k_max >= 1".into()));
            }
        }
        Ok(())
    }

    /// Grid sweeps tie constraint and Jacobian noise together as `ε_c = ε_J²`.
    pub fn validate_sweep(&self) -> Result<()> {
        self.validate()?;
        let expected = self.eps_j * self.eps_j;
        if (self.eps_c - expected).abs() > 1e-12 * expected.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidParameter(format!(
                "sweep requires eps_c = eps_j^2, got eps_c={} eps_j={}",
                self.eps_c, self.eps_j
            )));
        }
        Ok(())
    }
}

/// Target total variances `(ρ_g, ρ_c, ρ_j)` of one iteration's estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variances {
    pub g: f64,
    pub c: f64,
    pub j: f64,
}

pub fn variance_schedule(cfg: &NoiseConfig, _k: u64, beta_k: f64) -> Variances {
    match cfg.mode {
        VarianceMode::Coupled => {
            let b2 = beta_k * beta_k;
            Variances { g: cfg.eps_g * b2, c: cfg.eps_c * b2, j: cfg.eps_j * b2 }
        }
        VarianceMode::Raw => Variances { g: cfg.eps_g, c: cfg.eps_c, j: cfg.eps_j },
        VarianceMode::Complexity { omega_rho, k_max } => {
            let each = (omega_rho / 3.0).powi(2) / k_max as f64;
            Variances { g: each, c: each, j: each }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticEstimate {
    pub gbar: Vector,
    pub cbar: Vector,
    pub jbar: Matrix,
    /// Variances that generated a Gaussian estimate; `None` for mini-batches.
    pub variances: Option<Variances>,
    /// Oracle evaluations spent, including Jacobian redraws.
    pub draws: u32,
}

fn add_noise<R: Rng>(rng: &mut R, values: &mut [f64], total_var: f64) {
    if total_var == 0.0 || values.is_empty() {
        return;
    }
    let sd = (total_var / values.len() as f64).sqrt();
    for v in values {
        *v += sd * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Perturbs exact values with independent Gaussian noise of per-entry variance
/// `ρ_g/n`, `ρ_c/m` and `ρ_j/(mn)`. `(ḡ, c̄)` and `j̄` use separate sub-streams;
/// `attempt` selects an independent redraw of `j̄` only.
pub fn gaussian_estimate(
    g: &Vector,
    c: &Vector,
    jac: &Matrix,
    variances: Variances,
    k: u64,
    stream: &StreamKey,
    attempt: u8,
) -> StochasticEstimate {
    let mut gbar = g.clone();
    let mut cbar = c.clone();
    let mut jbar = jac.clone();
    let mut rng = stream.stream(k, Component::GradientAndConstraint, 0);
    add_noise(&mut rng, gbar.as_mut_slice(), variances.g);
    add_noise(&mut rng, cbar.as_mut_slice(), variances.c);
    let mut rng = stream.stream(k, Component::Jacobian, attempt);
    add_noise(&mut rng, jbar.as_mut_slice(), variances.j);
    StochasticEstimate { gbar, cbar, jbar, variances: Some(variances), draws: 1 }
}

/// Source of per-iteration estimates at a point.
pub trait StochasticOracle: Send + Sync {
    fn estimate(&self, x: &Vector, k: u64, beta_k: f64, stream: &StreamKey) -> Result<StochasticEstimate>;
}

/// Gaussian perturbation of a deterministic problem.
pub struct GaussianOracle<'a> {
    pub problem: &'a dyn ProblemOracle,
    pub noise: NoiseConfig,
}

impl<'a> GaussianOracle<'a> {
    pub fn new(problem: &'a dyn ProblemOracle, noise: NoiseConfig) -> Self {
        Self { problem, noise }
    }
}

impl StochasticOracle for GaussianOracle<'_> {
    fn estimate(&self, x: &Vector, k: u64, beta_k: f64, stream: &StreamKey) -> Result<StochasticEstimate> {
        let g = self.problem.gradient(x);
        let c = self.problem.constraints(x);
        let jac = self.problem.jacobian(x);
        let variances = variance_schedule(&self.noise, k, beta_k);
        for attempt in 0..MAX_JACOBIAN_DRAWS {
            let mut est = gaussian_estimate(&g, &c, &jac, variances, k, stream, attempt);
            if has_full_row_rank(&est.jbar) {
                est.draws = attempt as u32 + 1;
                return Ok(est);
            }
        }
        Err(Error::RankDeficient { ratio: 0.0 })
    }
}

/// Mini-batch estimates for [`LogisticProblem`]: `b1` data points for `ḡ`, `b2`
/// pool pairs for the linear constraint block, exact sphere row.
pub struct MiniBatchOracle<'a> {
    pub problem: &'a LogisticProblem,
    pub b1: usize,
    pub b2: usize,
}

impl<'a> MiniBatchOracle<'a> {
    pub fn new(problem: &'a LogisticProblem, b1: usize, b2: usize) -> Result<Self> {
        let n_data = problem.dataset().len();
        let pool = problem.pool().len();
        if b1 == 0 || b1 > n_data {
            return Err(Error::BatchTooLarge { batch: b1, pool: n_data });
        }
        if b2 == 0 || b2 > pool {
            return Err(Error::BatchTooLarge { batch: b2, pool });
        }
        Ok(Self { problem, b1, b2 })
    }
}

/// One mini-batch draw; sampling is without replacement within the batch.
pub fn minibatch_estimate(
    problem: &LogisticProblem,
    x: &Vector,
    b1: usize,
    b2: usize,
    k: u64,
    stream: &StreamKey,
    attempt: u8,
) -> Result<StochasticEstimate> {
    let n_data = problem.dataset().len();
    let pool = problem.pool().len();
    if b1 == 0 || b1 > n_data {
        return Err(Error::BatchTooLarge { batch: b1, pool: n_data });
    }
    if b2 == 0 || b2 > pool {
        return Err(Error::BatchTooLarge { batch: b2, pool });
    }
    let mut rng = stream.stream(k, Component::ObjectiveBatch, 0);
    let data_idx = index::sample(&mut rng, n_data, b1).into_vec();
    let mut rng = stream.stream(k, Component::ConstraintBatch, attempt);
    let pool_idx = index::sample(&mut rng, pool, b2).into_vec();
    let gbar = problem.batch_gradient(x, &data_idx);
    let (a, b) = problem.pool().mean_of(&pool_idx);
    let (cbar, jbar) = problem.constraints_with(x, &a, &b);
    Ok(StochasticEstimate { gbar, cbar, jbar, variances: None, draws: 1 })
}

impl StochasticOracle for MiniBatchOracle<'_> {
    fn estimate(&self, x: &Vector, k: u64, _beta_k: f64, stream: &StreamKey) -> Result<StochasticEstimate> {
        for attempt in 0..MAX_JACOBIAN_DRAWS {
            let mut est = minibatch_estimate(self.problem, x, self.b1, self.b2, k, stream, attempt)?;
            if has_full_row_rank(&est.jbar) {
                est.draws = attempt as u32 + 1;
                return Ok(est);
            }
        }
        Err(Error::RankDeficient { ratio: 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_logistic_problem, synthetic_dataset, Builtin, LogisticProblemConfig};

    #[test]
    fn zero_noise_returns_truth() {
        let p = Builtin::CircleTwo;
        let x = p.initial_point();
        let est = GaussianOracle::new(&p, NoiseConfig::zero()).estimate(&x, 3, 0.1, &StreamKey::new(1, "z")).unwrap();
        assert_eq!(est.gbar, p.gradient(&x));
        assert_eq!(est.cbar, p.constraints(&x));
        assert_eq!(est.jbar, p.jacobian(&x));
    }

    #[test]
    fn replay_is_bitwise() {
        let p = Builtin::PowellLike;
        let x = p.initial_point();
        let noise = NoiseConfig::coupled(1e-2, 1e-2, 1e-1).unwrap();
        let oracle = GaussianOracle::new(&p, noise);
        let key = StreamKey::new(5, "replay");
        let a = oracle.estimate(&x, 17, 0.1, &key).unwrap();
        let b = oracle.estimate(&x, 17, 0.1, &key).unwrap();
        let bits = |e: &StochasticEstimate| -> Vec<u64> {
            e.gbar.iter().chain(e.cbar.iter()).chain(e.jbar.iter()).map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&oracle.estimate(&x, 18, 0.1, &key).unwrap()));
    }

    #[test]
    fn jacobian_redraw_leaves_gradient_untouched() {
        let g = Vector::from_row_slice(&[1.0, 2.0]);
        let c = Vector::from_row_slice(&[0.5]);
        let jac = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let var = Variances { g: 1.0, c: 1.0, j: 1.0 };
        let key = StreamKey::new(0, "r");
        let a = gaussian_estimate(&g, &c, &jac, var, 2, &key, 0);
        let b = gaussian_estimate(&g, &c, &jac, var, 2, &key, 1);
        assert_eq!(a.gbar, b.gbar);
        assert_eq!(a.cbar, b.cbar);
        assert_ne!(a.jbar, b.jbar);
    }

    #[test]
    fn schedule_modes() {
        let cfg = NoiseConfig::coupled(1e-4, 1e-4, 1e-2).unwrap();
        assert!((variance_schedule(&cfg, 1, 0.1).g - 1e-6).abs() < 1e-20);
        let raw = NoiseConfig::new(1e-4, 0.0, 0.0, VarianceMode::Raw).unwrap();
        assert_eq!(variance_schedule(&raw, 1, 0.1).g, 1e-4);
        assert_eq!(variance_schedule(&raw, 900, 0.5).g, 1e-4);
        let cx = NoiseConfig::new(0.0, 0.0, 0.0, VarianceMode::Complexity { omega_rho: 1.0, k_max: 10_000 }).unwrap();
        let v = variance_schedule(&cx, 1, 1.0);
        assert!(v.g.sqrt() + v.c.sqrt() + v.j.sqrt() <= 1e-2 + 1e-15);
    }

    #[test]
    fn sweep_validation() {
        assert!(NoiseConfig::coupled(1e-8, 1e-4, 1e-2).unwrap().validate_sweep().is_ok());
        assert!(NoiseConfig::coupled(1e-8, 1e-4, 1e-4).unwrap().validate_sweep().is_err());
        assert!(NoiseConfig::coupled(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn full_batch_without_pool_noise_is_exact() {
        let mut cfg = LogisticProblemConfig::with_defaults(synthetic_dataset(60, 12, 1));
        cfg.k = 20;
        cfg.perturbation_var = 0.0;
        cfg.rhs_var = 0.0;
        let p = build_logistic_problem(&cfg, "mb", 3).unwrap();
        let x = p.initial_point();
        let est = MiniBatchOracle::new(&p, 60, 7).unwrap().estimate(&x, 1, 1.0, &StreamKey::new(0, "mb")).unwrap();
        assert!((est.gbar - p.gradient(&x)).amax() < 1e-14);
        assert!((est.cbar - p.constraints(&x)).amax() < 1e-10);
        assert!((est.jbar - p.jacobian(&x)).amax() < 1e-12);
    }

    #[test]
    fn oversized_batches_are_rejected() {
        let mut cfg = LogisticProblemConfig::with_defaults(synthetic_dataset(30, 12, 1));
        cfg.k = 10;
        let p = build_logistic_problem(&cfg, "mb", 3).unwrap();
        assert!(matches!(MiniBatchOracle::new(&p, 31, 5), Err(Error::BatchTooLarge { batch: 31, pool: 30 })));
        assert!(matches!(MiniBatchOracle::new(&p, 5, 11), Err(Error::BatchTooLarge { batch: 11, pool: 10 })));
    }
}
