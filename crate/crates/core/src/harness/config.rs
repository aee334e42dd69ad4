use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::VarianceMode;
use crate::schedule::BetaSchedule;
use crate::sqp::{SqpParams, StepPolicy};
use crate::subgradient::TAU_SWEEP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sqp,
    Subgradient,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Sqp => "sqp",
            Method::Subgradient => "subgradient",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(ε_g, ε_c, ε_J)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel(pub f64, pub f64, pub f64);

/// Whether Gaussian variances scale with `β_k²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    Coupled,
    Raw,
}

/// Step-size parameter regime. The complexity regime also fixes the noise
/// variances from `ω_ρ`. Serialized in the same text form the CLI takes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BetaMode {
    Constant(f64),
    Diminishing,
    Complexity { k_max: u64, omega_beta: f64, omega_rho: f64 },
}

impl Default for BetaMode {
    fn default() -> Self {
        BetaMode::Constant(0.1)
    }
}

impl BetaMode {
    pub fn schedule(&self) -> BetaSchedule {
        match *self {
            BetaMode::Constant(b) => BetaSchedule::Constant(b),
            BetaMode::Diminishing => BetaSchedule::Diminishing,
            BetaMode::Complexity { k_max, omega_beta, .. } => BetaSchedule::Complexity { k_max, omega_beta },
        }
    }

    pub fn variance_mode(&self, coupling: Coupling) -> VarianceMode {
        match (*self, coupling) {
            (BetaMode::Complexity { k_max, omega_rho, .. }, _) => VarianceMode::Complexity { omega_rho, k_max },
            (_, Coupling::Coupled) => VarianceMode::Coupled,
            (_, Coupling::Raw) => VarianceMode::Raw,
        }
    }

    /// Accepts the schedule syntax plus `complexity:<k_max>:<omega_beta>:<omega_rho>`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("complexity:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let bad = || Error::Config(format!("invalid beta mode `{s}`"));
            if let [k, wb, wr] = parts.as_slice() {
                let mode = BetaMode::Complexity {
                    k_max: k.parse().map_err(|_| bad())?,
                    omega_beta: wb.parse().map_err(|_| bad())?,
                    omega_rho: wr.parse().map_err(|_| bad())?,
                };
                mode.schedule().validate()?;
                return Ok(mode);
            }
            return Err(bad());
        }
        Ok(match s.parse::<BetaSchedule>()? {
            BetaSchedule::Constant(b) => BetaMode::Constant(b),
            BetaSchedule::Diminishing => BetaMode::Diminishing,
            BetaSchedule::Complexity { .. } => unreachable!("handled above"),
        })
    }
}

impl TryFrom<String> for BetaMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        BetaMode::parse(&s)
    }
}

impl From<BetaMode> for String {
    fn from(mode: BetaMode) -> Self {
        mode.to_string()
    }
}

impl fmt::Display for BetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaMode::Complexity { k_max, omega_beta, omega_rho } => {
                write!(f, "complexity:{k_max}:{omega_beta}:{omega_rho}")
            }
            other => write!(f, "{}", other.schedule()),
        }
    }
}

/// Algorithm constants; `L`, `Γ` and the iteration budget come from elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tau0: f64,
    pub xi0: f64,
    pub eta: f64,
    pub sigma: f64,
    pub eps_tau: f64,
    pub eps_xi: f64,
    pub theta: f64,
    pub zeta: f64,
    pub kappa_h: f64,
    pub step_policy: StepPolicy,
    pub check_invariants: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let p = SqpParams::default();
        Self {
            tau0: p.tau0,
            xi0: p.xi0,
            eta: p.eta,
            sigma: p.sigma,
            eps_tau: p.eps_tau,
            eps_xi: p.eps_xi,
            theta: p.theta,
            zeta: p.zeta,
            kappa_h: p.kappa_h,
            step_policy: p.step_policy,
            check_invariants: true,
        }
    }
}

impl SolverSettings {
    pub fn params(&self, lip_l: f64, lip_gamma: f64, max_iter: u64) -> SqpParams {
        SqpParams {
            tau0: self.tau0,
            xi0: self.xi0,
            eta: self.eta,
            sigma: self.sigma,
            eps_tau: self.eps_tau,
            eps_xi: self.eps_xi,
            theta: self.theta,
            lip_l,
            lip_gamma,
            zeta: self.zeta,
            kappa_h: self.kappa_h,
            max_iter,
            step_policy: self.step_policy,
        }
    }
}

/// How `(L, Γ)` are obtained per problem. Explicit values override the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzSettings {
    pub samples: usize,
    pub radius: f64,
    pub lip_l: Option<f64>,
    pub lip_gamma: Option<f64>,
}

impl Default for LipschitzSettings {
    fn default() -> Self {
        Self { samples: 200, radius: 1.0, lip_l: None, lip_gamma: None }
    }
}

/// Settings for `logistic-synthetic` and `libsvm:<path>` problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSettings {
    /// Size of the synthetic dataset.
    pub n_samples: usize,
    pub n_features: usize,
    pub data_seed: u64,
    pub pool_size: usize,
    pub a2: f64,
    /// Defaults to `10⁻³/n`.
    pub perturbation_var: Option<f64>,
    pub rhs_var: f64,
    pub b1: usize,
    pub b2: usize,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            n_features: 20,
            data_seed: 0,
            pool_size: 1000,
            a2: 1.0,
            perturbation_var: None,
            rhs_var: 1e-3,
            b1: 128,
            b2: 128,
        }
    }
}

/// Budget given to each subgradient run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineBudget {
    /// As many oracle calls as the matched SQP run, for every `τ`.
    #[default]
    WorkMatched,
    /// The matched SQP run's wall-clock time, for every `τ`. Not reproducible.
    WallClock,
    /// The same iteration count as the SQP runs.
    Iterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in names, `logistic-synthetic` or `libsvm:<path>`.
    pub problems: Vec<String>,
    pub methods: Vec<Method>,
    /// Ignored by mini-batch problems.
    pub noise_grid: Vec<NoiseLevel>,
    pub coupling: Coupling,
    pub beta_mode: BetaMode,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub iterations: u64,
    pub baseline_budget: BaselineBudget,
    pub tau_sweep: Vec<f64>,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub solver: SolverSettings,
    pub lipschitz: LipschitzSettings,
    pub logistic: LogisticSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problems: Vec::new(),
            methods: vec![Method::Sqp],
            noise_grid: vec![NoiseLevel(0.0, 0.0, 0.0)],
            coupling: Coupling::Coupled,
            beta_mode: BetaMode::default(),
            seeds: vec![1],
            master_seed: 0,
            iterations: 5000,
            baseline_budget: BaselineBudget::WorkMatched,
            tau_sweep: TAU_SWEEP.to_vec(),
            workers: 0,
            output_dir: PathBuf::from("out"),
            solver: SolverSettings::default(),
            lipschitz: LipschitzSettings::default(),
            logistic: LogisticSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("`{what}` must not be empty")));
        if self.problems.is_empty() {
            return empty("problems");
        }
        if self.methods.is_empty() {
            return empty("methods");
        }
        if self.seeds.is_empty() {
            return empty("seeds");
        }
        if self.noise_grid.is_empty() {
            return empty("noise_grid");
        }
        if self.methods.contains(&Method::Subgradient) && self.tau_sweep.is_empty() {
            return empty("tau_sweep");
        }
        if self.tau_sweep.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("tau_sweep values must be positive".into()));
        }
        for NoiseLevel(g, c, j) in &self.noise_grid {
            if [g, c, j].iter().any(|e| !(e.is_finite() && **e >= 0.0)) {
                return Err(Error::Config(format!("noise level ({g}, {c}, {j}) must be finite and >= 0")));
            }
        }
        self.beta_mode.schedule().validate()?;
        let mut sorted_seeds = self.seeds.clone();
        sorted_seeds.sort_unstable();
        sorted_seeds.dedup();
        if sorted_seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json() {
        let cfg = ExperimentConfig::from_json(r#"{"problems": ["quad-plane"], "seeds": [1, 2]}"#).unwrap();
        assert_eq!(cfg.methods, vec![Method::Sqp]);
        assert_eq!(cfg.iterations, 5000);
        assert_eq!(cfg.tau_sweep.len(), 7);
    }

    #[test]
    fn full_json() {
        let text = r#"{
            "problems": ["quad-plane", "logistic-synthetic"],
            "methods": ["sqp", "subgradient"],
            "noise_grid": [[1e-4, 1e-4, 1e-2]],
            "beta_mode": "complexity:10000:0.5:0.1",
            "seeds": [3],
            "solver": {"theta": 5.0, "step_policy": "min"},
            "logistic": {"n_samples": 100, "b1": 16}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.noise_grid, vec![NoiseLevel(1e-4, 1e-4, 1e-2)]);
        assert_eq!(cfg.beta_mode.schedule().beta(1), 0.005);
        assert_eq!(cfg.solver.step_policy, StepPolicy::Min);
        assert_eq!(cfg.logistic.b2, 128);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json(r#"{"problems": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problems": ["a"], "seeds": [1, 1]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problems": ["a"], "beta_mode": "const:2"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problems": ["a"], "unknown": 1}"#).is_err());
    }

    #[test]
    fn beta_mode_text() {
        for text in ["const:0.1", "dimin", "complexity:10000:0.5:0.1"] {
            assert_eq!(BetaMode::parse(text).unwrap().to_string(), text);
        }
        assert_eq!(
            BetaMode::parse("complexity:100:1:2").unwrap().variance_mode(Coupling::Raw),
            VarianceMode::Complexity { omega_rho: 2.0, k_max: 100 }
        );
        assert!(BetaMode::parse("complexity:1:2").is_err());
    }
}
