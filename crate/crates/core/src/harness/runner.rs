//! Executes the cross product of run keys on a worker pool. Results come back
//! in canonical key order whatever the number of workers.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{best_iterate, BestIterate};
use crate::oracles::NoiseConfig;
use crate::problems::LipschitzEstimate;
use crate::record::IterateRecord;
use crate::rng::StreamKey;
use crate::sqp::SqpSolver;
use crate::subgradient::{run_subgradient, Budget, SubgradConfig};

use super::config::{BaselineBudget, BetaMode, ExperimentConfig, Method, NoiseLevel};
use super::problem::LoadedProblem;

/// Identifies one run. Field order is the canonical output order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub problem_index: usize,
    pub problem: String,
    /// `None` for mini-batch problems.
    pub noise: Option<NoiseLevel>,
    pub noise_index: usize,
    pub beta_mode: BetaMode,
    pub seed: u64,
    pub method: Method,
    /// Fixed merit parameter of a subgradient run.
    pub tau: Option<f64>,
}

impl RunKey {
    /// Text hashed into the run's random stream; independent of grid position.
    pub fn label(&self) -> String {
        let noise = match self.noise {
            Some(NoiseLevel(g, c, j)) => format!("{g:e},{c:e},{j:e}"),
            None => "minibatch".into(),
        };
        let tau = self.tau.map(|t| format!("{t:e}")).unwrap_or_default();
        format!("{}|{}|{noise}|{}|{}|{tau}", self.problem, self.method, self.beta_mode, self.seed)
    }

    /// Key of the noise stream. Runs that differ only in method or `τ` share
    /// it, which keeps method comparisons noise-matched.
    fn noise_stream(&self, master_seed: u64) -> StreamKey {
        let mut shared = self.clone();
        shared.method = Method::Sqp;
        shared.tau = None;
        StreamKey::new(master_seed, &shared.label())
    }

    pub fn run_id(&self, master_seed: u64) -> String {
        StreamKey::new(master_seed, &self.label()).id_hex()
    }

    fn group(&self) -> (usize, usize, u64) {
        (self.problem_index, self.noise_index, self.seed)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub key: RunKey,
    pub run_id: String,
    pub records: Vec<IterateRecord>,
    pub best: Option<BestIterate>,
    /// Why the run stopped early, if it did.
    pub error: Option<Error>,
    pub elapsed: Duration,
}

impl RunOutcome {
    pub fn oracle_calls(&self) -> u64 {
        self.records.last().map_or(0, |r| r.oracle_calls)
    }

    pub fn status(&self) -> String {
        match &self.error {
            None => "ok".into(),
            Some(e) if e.is_invariant_violation() => "invariant-violation".into(),
            Some(_) => "runtime-failure".into(),
        }
    }
}

struct Prepared {
    id: String,
    problem: LoadedProblem,
    lipschitz: LipschitzEstimate,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Vec<Prepared>> {
    cfg.problems
        .iter()
        .map(|id| {
            let problem = LoadedProblem::load(id, &cfg.logistic, cfg.master_seed)?;
            let lipschitz = problem.lipschitz(id, &cfg.lipschitz, cfg.master_seed)?;
            let params = cfg.solver.params(lipschitz.lip_l, lipschitz.lip_gamma, cfg.iterations);
            params.validate_schedule(&cfg.beta_mode.schedule())?;
            Ok(Prepared { id: id.clone(), problem, lipschitz })
        })
        .collect()
}

fn keys(cfg: &ExperimentConfig, prepared: &[Prepared], method: Method) -> Vec<RunKey> {
    let taus: Vec<Option<f64>> = match method {
        Method::Sqp => vec![None],
        Method::Subgradient => cfg.tau_sweep.iter().copied().map(Some).collect(),
    };
    let mut out = Vec::new();
    for (problem_index, p) in prepared.iter().enumerate() {
        let noises: Vec<Option<NoiseLevel>> = if p.problem.is_minibatch() {
            vec![None]
        } else {
            cfg.noise_grid.iter().copied().map(Some).collect()
        };
        for (noise_index, noise) in noises.into_iter().enumerate() {
            for &seed in &cfg.seeds {
                for &tau in &taus {
                    out.push(RunKey {
                        problem_index,
                        problem: p.id.clone(),
                        noise,
                        noise_index,
                        beta_mode: cfg.beta_mode,
                        seed,
                        method,
                        tau,
                    });
                }
            }
        }
    }
    out
}

fn noise_config(cfg: &ExperimentConfig, key: &RunKey) -> NoiseConfig {
    let NoiseLevel(g, c, j) = key.noise.unwrap_or(NoiseLevel(0.0, 0.0, 0.0));
    NoiseConfig { eps_g: g, eps_c: c, eps_j: j, mode: cfg.beta_mode.variance_mode(cfg.coupling) }
}

fn finish(key: RunKey, cfg: &ExperimentConfig, p: &Prepared, records: Vec<IterateRecord>, error: Option<Error>, started: Instant) -> RunOutcome {
    let elapsed = started.elapsed();
    let (best, error) = match best_iterate(&records, p.problem.oracle()) {
        Ok(best) => (Some(best), error),
        Err(Error::EmptyRun) => (None, error),
        Err(e) => (None, error.or(Some(e))),
    };
    RunOutcome { run_id: key.run_id(cfg.master_seed), key, records, best, error, elapsed }
}

fn run_sqp(cfg: &ExperimentConfig, p: &Prepared, key: RunKey) -> RunOutcome {
    let started = Instant::now();
    let attempt = || -> Result<std::result::Result<Vec<IterateRecord>, crate::sqp::RunAborted>> {
        let params = cfg.solver.params(p.lipschitz.lip_l, p.lipschitz.lip_gamma, cfg.iterations);
        let mut solver = SqpSolver::new(params, cfg.beta_mode.schedule())?;
        solver.check_invariants = cfg.solver.check_invariants;
        let oracle = p.problem.stochastic(noise_config(cfg, &key), &cfg.logistic)?;
        Ok(solver.run(p.problem.oracle(), oracle.as_ref(), &key.noise_stream(cfg.master_seed)))
    };
    let (records, error) = match attempt() {
        Ok(Ok(records)) => (records, None),
        Ok(Err(aborted)) => (aborted.records, Some(aborted.error)),
        Err(e) => (Vec::new(), Some(e)),
    };
    finish(key, cfg, p, records, error, started)
}

fn run_baseline(cfg: &ExperimentConfig, p: &Prepared, key: RunKey, budget: Budget) -> RunOutcome {
    let started = Instant::now();
    let sub = SubgradConfig {
        tau: key.tau.expect("baseline runs carry tau"),
        lip_l: p.lipschitz.lip_l,
        lip_gamma: p.lipschitz.lip_gamma,
        budget,
    };
    let result = p
        .problem
        .stochastic(noise_config(cfg, &key), &cfg.logistic)
        .and_then(|oracle| {
            run_subgradient(
                p.problem.oracle(),
                oracle.as_ref(),
                &sub,
                &cfg.beta_mode.schedule(),
                &key.noise_stream(cfg.master_seed),
            )
        });
    let (records, error) = match result {
        Ok(records) => (records, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    finish(key, cfg, p, records, error, started)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every SQP key, then every baseline key with budgets taken from the
/// matching SQP run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let pool = pool(cfg.workers)?;
    let mut outcomes = Vec::new();

    if cfg.methods.contains(&Method::Sqp) {
        let sqp_keys = keys(cfg, &prepared, Method::Sqp);
        outcomes = pool.install(|| {
            sqp_keys
                .into_par_iter()
                .map(|key| run_sqp(cfg, &prepared[key.problem_index], key))
                .collect::<Vec<_>>()
        });
    }

    if cfg.methods.contains(&Method::Subgradient) {
        let matched: HashMap<(usize, usize, u64), (u64, Duration)> =
            outcomes.iter().map(|o| (o.key.group(), (o.oracle_calls(), o.elapsed))).collect();
        let budget_for = |key: &RunKey| match (cfg.baseline_budget, matched.get(&key.group())) {
            (BaselineBudget::WorkMatched, Some(&(calls, _))) => Budget::OracleCalls(calls),
            (BaselineBudget::WallClock, Some(&(_, elapsed))) => Budget::WallClock(elapsed),
            _ => Budget::Iterations(cfg.iterations),
        };
        let base_keys = keys(cfg, &prepared, Method::Subgradient);
        let baseline: Vec<RunOutcome> = pool.install(|| {
            base_keys
                .into_par_iter()
                .map(|key| {
                    let budget = budget_for(&key);
                    run_baseline(cfg, &prepared[key.problem_index], key, budget)
                })
                .collect()
        });
        outcomes.extend(baseline);
    }
    Ok(outcomes)
}
