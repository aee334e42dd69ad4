//! Command-line front end. Exit codes: 0 ok, 1 usage, 2 invariant violation,
//! 3 runtime failure.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::sqp::StepPolicy;

use super::compare::compare;
use super::config::{BetaMode, Coupling, ExperimentConfig, Method, NoiseLevel};
use super::gen_data::{generate, write_dataset, write_pool, GenDataArgs};
use super::output::{num, write_best, write_runs, write_summary};
use super::runner::{run_experiment, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stosqp", version, about = "Stochastic SQP solver and experiment runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver on one problem and write the per-iteration log.
    Solve(SolveArgs),
    /// Run a sweep described by a JSON config.
    Experiment(ExperimentArgs),
    /// Pair SQP and baseline best iterates from best.csv files.
    Compare(CompareArgs),
    /// Write a synthetic LIBSVM dataset and optionally its constraint pool.
    GenData(GenDataCli),
}

/// Overrides shared by `solve` and `experiment`; each one wins over the config file.
#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long)]
    pub xi0: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub eps_tau: Option<f64>,
    #[arg(long)]
    pub eps_xi: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// `geometric` or `min`.
    #[arg(long, value_parser = parse_policy)]
    pub step_policy: Option<StepPolicy>,
    #[arg(long)]
    pub lip_l: Option<f64>,
    #[arg(long)]
    pub lip_gamma: Option<f64>,
    /// `const:<v>`, `dimin` or `complexity:<k_max>:<omega_beta>:<omega_rho>`.
    #[arg(long, value_parser = parse_beta)]
    pub beta: Option<BetaMode>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Variances scale with `β²` (`coupled`) or not (`raw`).
    #[arg(long, value_parser = parse_coupling)]
    pub variance: Option<Coupling>,
    #[arg(long)]
    pub b1: Option<usize>,
    #[arg(long)]
    pub b2: Option<usize>,
    /// Skip the per-iteration lemma checks.
    #[arg(long)]
    pub no_invariant_checks: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: String,
    #[arg(long, default_value_t = 0.0)]
    pub eps_g: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps_c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps_j: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Per-iteration CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config supplying defaults for everything not given as a flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(required = true)]
    pub best: Vec<PathBuf>,
    /// Directory for compare.csv and medians.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataCli {
    /// Feature dimension.
    #[arg(long)]
    pub n: usize,
    /// Number of records.
    #[arg(long = "N")]
    pub n_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pool_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub pool_size: usize,
    #[arg(long)]
    pub perturbation_var: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub rhs_var: f64,
}

fn parse_beta(s: &str) -> std::result::Result<BetaMode, String> {
    BetaMode::parse(s).map_err(|e| e.to_string())
}

fn parse_policy(s: &str) -> std::result::Result<StepPolicy, String> {
    match s {
        "geometric" => Ok(StepPolicy::Geometric),
        "min" => Ok(StepPolicy::Min),
        _ => Err(format!("unknown step policy `{s}`")),
    }
}

fn parse_coupling(s: &str) -> std::result::Result<Coupling, String> {
    match s {
        "coupled" => Ok(Coupling::Coupled),
        "raw" => Ok(Coupling::Raw),
        _ => Err(format!("unknown variance mode `{s}`")),
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let s = &mut cfg.solver;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut s.tau0, self.tau0);
        set(&mut s.xi0, self.xi0);
        set(&mut s.eta, self.eta);
        set(&mut s.sigma, self.sigma);
        set(&mut s.eps_tau, self.eps_tau);
        set(&mut s.eps_xi, self.eps_xi);
        set(&mut s.theta, self.theta);
        if let Some(p) = self.step_policy {
            s.step_policy = p;
        }
        if self.no_invariant_checks {
            s.check_invariants = false;
        }
        if self.lip_l.is_some() {
            cfg.lipschitz.lip_l = self.lip_l;
        }
        if self.lip_gamma.is_some() {
            cfg.lipschitz.lip_gamma = self.lip_gamma;
        }
        if let Some(b) = self.beta {
            cfg.beta_mode = b;
        }
        if let Some(k) = self.iters {
            cfg.iterations = k;
        }
        if let Some(m) = self.master_seed {
            cfg.master_seed = m;
        }
        if let Some(v) = self.variance {
            cfg.coupling = v;
        }
        if let Some(b) = self.b1 {
            cfg.logistic.b1 = b;
        }
        if let Some(b) = self.b2 {
            cfg.logistic.b2 = b;
        }
    }
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvariantViolated(_) => EXIT_INVARIANT,
        Error::UnknownProblem(_) | Error::Config(_) | Error::InvalidParameter(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn outcome_code(runs: &[RunOutcome]) -> i32 {
    let mut code = EXIT_OK;
    for run in runs {
        match &run.error {
            Some(e) if e.is_invariant_violation() => return EXIT_INVARIANT,
            Some(_) => code = EXIT_RUNTIME,
            None => {}
        }
    }
    code
}

fn base_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn solve(args: &SolveArgs) -> Result<i32> {
    let mut cfg = base_config(args.config.as_ref())?;
    cfg.problems = vec![args.problem.clone()];
    cfg.methods = vec![Method::Sqp];
    cfg.noise_grid = vec![NoiseLevel(args.eps_g, args.eps_c, args.eps_j)];
    cfg.seeds = vec![args.seed];
    cfg.workers = 1;
    args.overrides.apply(&mut cfg);
    let runs = run_experiment(&cfg)?;
    let run = &runs[0];
    let summary = match &run.best {
        Some(b) => format!(
            "problem={} iterations={} best_k={} branch={} feas={} stat={} status={}",
            args.problem,
            run.records.len(),
            b.k,
            b.branch,
            num(b.errors.feas),
            num(b.errors.stat),
            run.status()
        ),
        None => format!("problem={} iterations=0 status={}", args.problem, run.status()),
    };
    match &args.out {
        Some(path) => {
            write_runs(BufWriter::new(File::create(path)?), &runs)?;
            println!("{summary}");
        }
        None => {
            write_runs(io::stdout().lock(), &runs)?;
            eprintln!("{summary}");
        }
    }
    if let Some(e) = &run.error {
        eprintln!("error: {e}");
    }
    Ok(outcome_code(&runs))
}

/// Writes runs.csv, best.csv and summary.csv into `dir`.
pub fn write_outputs(dir: &std::path::Path, runs: &[RunOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_runs(BufWriter::new(File::create(dir.join("runs.csv"))?), runs)?;
    write_best(BufWriter::new(File::create(dir.join("best.csv"))?), runs)?;
    write_summary(BufWriter::new(File::create(dir.join("summary.csv"))?), runs)?;
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> Result<i32> {
    let mut cfg = base_config(Some(&args.config))?;
    args.overrides.apply(&mut cfg);
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let runs = run_experiment(&cfg)?;
    write_outputs(&cfg.output_dir, &runs)?;
    let failed: Vec<&RunOutcome> = runs.iter().filter(|r| r.error.is_some()).collect();
    println!("{} runs written to {} ({} failed)", runs.len(), cfg.output_dir.display(), failed.len());
    for run in failed {
        eprintln!("{} [{}]: {}", run.run_id, run.key.label(), run.error.as_ref().expect("failed run"));
    }
    Ok(outcome_code(&runs))
}

fn compare_cmd(args: &CompareArgs) -> Result<i32> {
    let sources = args
        .best
        .iter()
        .map(|p| Ok((p.display().to_string(), File::open(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare(sources)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        cmp.write_pairs(BufWriter::new(File::create(dir.join("compare.csv"))?))?;
        cmp.write_medians(BufWriter::new(File::create(dir.join("medians.csv"))?))?;
    } else {
        cmp.write_medians(io::stdout().lock())?;
    }
    println!("stat: {}", cmp.stat);
    println!("feas: {}", cmp.feas);
    Ok(EXIT_OK)
}

fn gen_data(args: &GenDataCli) -> Result<i32> {
    let gen = GenDataArgs {
        n: args.n,
        n_samples: args.n_samples,
        seed: args.seed,
        pool_size: args.pool_size,
        perturbation_var: args.perturbation_var,
        rhs_var: args.rhs_var,
    };
    let (data, pool) = generate(&gen, args.pool_out.is_some())?;
    write_dataset(BufWriter::new(File::create(&args.out)?), &data)?;
    if let (Some(path), Some(pool)) = (&args.pool_out, pool) {
        write_pool(BufWriter::new(File::create(path)?), &pool)?;
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Experiment(a) => experiment(a),
        Command::Compare(a) => compare_cmd(a),
        Command::GenData(a) => gen_data(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
