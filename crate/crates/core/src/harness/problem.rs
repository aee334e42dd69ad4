use std::path::Path;

use crate::error::{Error, Result};
use crate::oracles::{GaussianOracle, MiniBatchOracle, NoiseConfig, StochasticOracle};
use crate::problems::{
    build_logistic_problem, builtin_problem, estimate_lipschitz, read_libsvm_file, synthetic_dataset, Builtin,
    LipschitzEstimate, LipschitzMethod, LogisticProblem, LogisticProblemConfig, ProblemOracle,
};
use crate::rng::StreamKey;

use super::config::{LipschitzSettings, LogisticSettings};

pub const SYNTHETIC: &str = "logistic-synthetic";
pub const LIBSVM_PREFIX: &str = "libsvm:";

/// A resolved problem identifier.
pub enum LoadedProblem {
    Builtin(Builtin),
    Logistic(Box<LogisticProblem>),
}

impl LoadedProblem {
    /// Resolves `id`; logistic instances are drawn from `master_seed`.
    pub fn load(id: &str, settings: &LogisticSettings, master_seed: u64) -> Result<Self> {
        let dataset = if id == SYNTHETIC {
            synthetic_dataset(settings.n_samples, settings.n_features, settings.data_seed)
        } else if let Some(path) = id.strip_prefix(LIBSVM_PREFIX) {
            read_libsvm_file(Path::new(path), None)?
        } else {
            return builtin_problem(id).map(LoadedProblem::Builtin);
        };
        let mut cfg = LogisticProblemConfig::with_defaults(dataset);
        cfg.k = settings.pool_size;
        cfg.a2 = settings.a2;
        cfg.rhs_var = settings.rhs_var;
        if let Some(v) = settings.perturbation_var {
            cfg.perturbation_var = v;
        }
        Ok(LoadedProblem::Logistic(Box::new(build_logistic_problem(&cfg, id, master_seed)?)))
    }

    pub fn oracle(&self) -> &dyn ProblemOracle {
        match self {
            LoadedProblem::Builtin(b) => b,
            LoadedProblem::Logistic(p) => p.as_ref(),
        }
    }

    /// Mini-batch problems carry their own noise; the Gaussian grid does not apply.
    pub fn is_minibatch(&self) -> bool {
        matches!(self, LoadedProblem::Logistic(_))
    }

    /// The stochastic oracle for one run. `noise` is ignored for mini-batch problems.
    pub fn stochastic<'a>(&'a self, noise: NoiseConfig, settings: &LogisticSettings) -> Result<Box<dyn StochasticOracle + 'a>> {
        Ok(match self {
            LoadedProblem::Builtin(b) => Box::new(GaussianOracle::new(b, noise)),
            LoadedProblem::Logistic(p) => Box::new(MiniBatchOracle::new(p, settings.b1, settings.b2)?),
        })
    }

    /// `(L, Γ)` from the settings, falling back to sampling around `x₁`.
    pub fn lipschitz(&self, id: &str, settings: &LipschitzSettings, master_seed: u64) -> Result<LipschitzEstimate> {
        if let (Some(lip_l), Some(lip_gamma)) = (settings.lip_l, settings.lip_gamma) {
            return Ok(LipschitzEstimate { lip_l, lip_gamma, method: LipschitzMethod::Analytic });
        }
        let problem = self.oracle();
        let key = StreamKey::new(master_seed, &format!("lipschitz/{id}"));
        let mut est = estimate_lipschitz(problem, &problem.initial_point(), settings.samples, settings.radius, &key)?;
        if let Some(l) = settings.lip_l {
            est.lip_l = l;
        }
        if let Some(g) = settings.lip_gamma {
            est.lip_gamma = g;
        }
        if !(est.lip_l > 0.0 && est.lip_gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("bad Lipschitz constants for {id}")));
        }
        Ok(est)
    }
}
