//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test -p stosqp --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stosqp::harness::config::{LipschitzSettings, LogisticSettings};
use stosqp::harness::output::reduced_results;
use stosqp::harness::problem::LoadedProblem;
use stosqp::harness::{run_experiment, BetaMode, ExperimentConfig, Method, NoiseLevel, RunOutcome};
use stosqp::linalg::{solve_kkt, KktSystem, Matrix, Vector};
use stosqp::metrics::{best_iterate, check_iteration_invariants, check_merit_monotone, quantile, ErrorPair};
use stosqp::oracles::{gaussian_estimate, GaussianOracle, NoiseConfig, Variances};
use stosqp::problems::{Builtin, ProblemOracle, BUILTIN_NAMES};
use stosqp::rng::StreamKey;
use stosqp::schedule::BetaSchedule;
use stosqp::sqp::{PhiModel, SqpParams, SqpSolver};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn lipschitz(problem: &Builtin) -> (f64, f64) {
    let loaded = LoadedProblem::Builtin(*problem);
    let est = loaded.lipschitz(problem.name(), &LipschitzSettings::default(), 0).expect("lipschitz estimate");
    (est.lip_l, est.lip_gamma)
}

fn solver(problem: &Builtin, schedule: BetaSchedule, iters: u64) -> SqpSolver {
    let (lip_l, lip_gamma) = lipschitz(problem);
    let params = SqpParams { lip_l, lip_gamma, max_iter: iters, ..SqpParams::default() };
    SqpSolver::new(params, schedule).expect("valid solver")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile(values, 0.5)
}

fn criterion_1() -> Verdict {
    let noises = [(0.0, 0.0, 0.0), (1e-8, 1e-8, 1e-4), (1e-4, 1e-4, 1e-2), (1e-2, 1e-2, 1e-1)];
    let (mut configs, mut records, mut violations, mut aborted) = (0, 0, 0, 0);
    let mut first = None;
    for problem in Builtin::all() {
        let mut s = solver(&problem, BetaSchedule::Constant(0.1), 200);
        s.check_invariants = false;
        for (g, c, j) in noises {
            configs += 1;
            let oracle = GaussianOracle::new(&problem, NoiseConfig::coupled(g, c, j).unwrap());
            for seed in 1..=5 {
                let key = StreamKey::new(seed, &format!("lemma/{}/{g}/{c}/{j}", problem.name()));
                match s.run(&problem, &oracle, &key) {
                    Ok(log) => {
                        records += log.len();
                        let mut found: Vec<_> = log.iter().flat_map(|r| check_iteration_invariants(r, &s.params)).collect();
                        found.extend(check_merit_monotone(&log, &s.params));
                        violations += found.len();
                        if first.is_none() {
                            first = found.first().map(|v| format!("{} {v}", problem.name()));
                        }
                    }
                    Err(e) => {
                        aborted += 1;
                        first.get_or_insert_with(|| format!("{}: {e}", problem.name()));
                    }
                }
            }
        }
    }
    let detail = format!(
        "{configs} configurations x 5 seeds, {records} iterations checked, {violations} violations, {aborted} aborted runs{}",
        first.map(|f| format!("; first: {f}")).unwrap_or_default()
    );
    verdict(violations == 0 && aborted == 0 && configs >= 20, detail)
}

fn kkt_residual(sys: &KktSystem, d: &Vector, y: &Vector) -> (f64, f64) {
    let k = sys.block_matrix();
    let sol = Vector::from_iterator(d.len() + y.len(), d.iter().chain(y.iter()).cloned());
    let rhs = Vector::from_iterator(d.len() + y.len(), sys.rhs_g.iter().chain(sys.rhs_c.iter()).cloned());
    ((k * sol + &rhs).amax(), rhs.amax())
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(0..=n.min(10));
        let mut gauss = |r, c| Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = gauss(n, n);
        let h = &a * a.transpose() + Matrix::identity(n, n);
        let h = (&h + h.transpose()) * 0.5;
        let jac = gauss(m, n);
        let g = gauss(n, 1).column(0).into_owned();
        let c = gauss(m, 1).column(0).into_owned();
        let sys = KktSystem::new(h, jac, g, c).expect("valid system");
        let sol = match solve_kkt(&sys) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("random system failed: {e}")),
        };
        let (res, rhs) = kkt_residual(&sys, &sol.d, &sol.y);
        worst = worst.max(res / (1.0 + rhs));
    }
    let v = |s: &[f64]| Vector::from_row_slice(s);
    let examples = [
        (Matrix::identity(2, 2), [1.0, 0.0], [1.0, 1.0], 1.0, [-1.0, -1.0], 0.0),
        (Matrix::identity(2, 2), [1.0, 0.0], [0.0, 0.0], 0.0, [0.0, 0.0], 0.0),
        (Matrix::identity(2, 2) * 2.0, [1.0, 1.0], [2.0, 0.0], 2.0, [-1.5, -0.5], 1.0),
    ];
    let mut example_err: f64 = 0.0;
    for (h, j, g, c, d, y) in examples {
        let sys = KktSystem::new(h, Matrix::from_row_slice(1, 2, &j), v(&g), v(&[c])).unwrap();
        let sol = solve_kkt(&sys).unwrap();
        example_err = example_err.max((sol.d - v(&d)).amax()).max((sol.y[0] - y).abs());
    }
    verdict(
        worst <= 1e-10 && example_err <= 1e-12,
        format!("worst scaled residual {worst:.2e} over 100 systems; hand examples max error {example_err:.2e}"),
    )
}

/// Largest root of a convex `φ` with `φ(0) = 0` by doubling then bisection.
fn brute_force_root(phi: &PhiModel) -> f64 {
    let mut hi = 1.0;
    while phi.eval(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if phi.eval(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    lo
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        let phi = PhiModel {
            eta: rng.random_range(0.01..0.99),
            beta: rng.random_range(1e-3..=1.0),
            delta_l: log_uniform(&mut rng, -4.0, 3.0),
            cbar_l1: if rng.random_bool(0.1) { 0.0 } else { log_uniform(&mut rng, -4.0, 3.0) },
            curvature: log_uniform(&mut rng, -2.0, 3.0),
            d_norm_sq: log_uniform(&mut rng, -4.0, 3.0),
        };
        let closed = match phi.largest_root() {
            Ok(r) => r,
            Err(e) => return verdict(false, format!("closed form failed on {phi:?}: {e}")),
        };
        let brute = brute_force_root(&phi);
        worst = worst.max((closed - brute).abs() / brute);
    }
    let base = PhiModel { eta: 0.5, beta: 1.0, delta_l: 2.0, cbar_l1: 1.0, curvature: 2.0, d_norm_sq: 1.0 };
    let one = base.largest_root().unwrap();
    let root2 = PhiModel { delta_l: 4.0, ..base }.largest_root().unwrap();
    let exact = (one - 1.0).abs() <= 1e-10 && (root2 - 2f64.sqrt()).abs() <= 1e-10;
    verdict(
        worst <= 1e-8 && exact,
        format!("worst relative gap {worst:.2e} over 1000 tuples; hand cases {one} and {root2}"),
    )
}

fn criterion_4() -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    for problem in Builtin::all() {
        let s = solver(&problem, BetaSchedule::Constant(0.1), 5000);
        let oracle = GaussianOracle::new(&problem, NoiseConfig::zero());
        let log = match s.run(&problem, &oracle, &StreamKey::new(0, "zero-noise")) {
            Ok(log) => log,
            Err(e) => {
                pass = false;
                lines.push(format!("{}: {e}", problem.name()));
                continue;
            }
        };
        let best = best_iterate(&log, &problem).unwrap();
        let dist = (&best.x - problem.known_solution().unwrap()).amax();
        let ok = best.errors.feas <= 1e-8 && best.errors.stat <= 1e-6;
        pass &= ok;
        lines.push(format!(
            "{} feas {:.1e} stat {:.1e} |x-x*| {:.1e}",
            problem.name(),
            best.errors.feas,
            best.errors.stat,
            dist
        ));
    }
    verdict(pass, lines.join("; "))
}

fn criterion_5() -> Verdict {
    let n = 10;
    let m = 4;
    let beta: f64 = 0.1;
    let eps = 1e-2;
    let target = eps * beta * beta;
    let g = Vector::from_fn(n, |i, _| i as f64);
    let c = Vector::from_fn(m, |i, _| 1.0 - i as f64);
    let jac = Matrix::from_fn(m, n, |i, j| (i + 2 * j) as f64);
    let variances = Variances { g: target, c: target, j: target };
    let key = StreamKey::new(5, "calibration");
    let draws = 100_000u64;
    let (mut sg, mut sc, mut sj) = (0.0, 0.0, 0.0);
    for k in 1..=draws {
        let est = gaussian_estimate(&g, &c, &jac, variances, k, &key, 0);
        sg += (&est.gbar - &g).norm_squared();
        sc += (&est.cbar - &c).norm_squared();
        sj += (&est.jbar - &jac).norm_squared();
    }
    let rel = [sg, sc, sj].map(|s| (s / draws as f64 - target).abs() / target);
    verdict(
        rel.iter().all(|&r| r <= 0.03),
        format!("relative errors of E|.|^2 vs {target:.0e}: g {:.2}%, c {:.2}%, J {:.2}%", rel[0] * 100.0, rel[1] * 100.0, rel[2] * 100.0),
    )
}

fn suite_config(methods: Vec<Method>, noise: NoiseLevel, beta: BetaMode) -> ExperimentConfig {
    ExperimentConfig {
        problems: BUILTIN_NAMES.iter().map(|s| s.to_string()).collect(),
        methods,
        noise_grid: vec![noise],
        beta_mode: beta,
        seeds: vec![1, 2, 3, 4, 5],
        iterations: 5000,
        ..ExperimentConfig::default()
    }
}

fn failures(runs: &[RunOutcome]) -> Option<String> {
    runs.iter()
        .find_map(|r| r.error.as_ref().map(|e| format!("{} seed {}: {e}", r.key.problem, r.key.seed)))
}

fn criterion_6_and_7() -> (Verdict, Duration, Verdict) {
    let started = Instant::now();
    let cfg = suite_config(vec![Method::Sqp], NoiseLevel(1e-4, 1e-4, 1e-2), BetaMode::Constant(0.1));
    let sqp_runs = run_experiment(&cfg).expect("experiment");
    let sqp_time = started.elapsed();
    let good = sqp_runs
        .iter()
        .filter(|r| r.best.as_ref().is_some_and(|b| b.errors.feas <= 1e-4 && b.errors.stat <= 1e-2))
        .count();
    let share = good as f64 / sqp_runs.len() as f64;
    let mut detail6 = format!("{good}/{} instances reach feas <= 1e-4 and stat <= 1e-2", sqp_runs.len());
    if let Some(f) = failures(&sqp_runs) {
        detail6.push_str(&format!("; failure: {f}"));
    }
    let c6 = verdict(share >= 0.6, detail6);

    let cfg = suite_config(vec![Method::Sqp, Method::Subgradient], NoiseLevel(1e-4, 1e-4, 1e-2), BetaMode::Constant(0.1));
    let runs = run_experiment(&cfg).expect("experiment");
    let reduced = reduced_results(&runs);
    let collect = |m: Method, f: fn(&ErrorPair) -> f64| -> Vec<f64> {
        reduced.iter().filter(|(k, _)| k.method == m).map(|(_, e)| f(e)).collect()
    };
    let sqp_stat = median(&mut collect(Method::Sqp, |e| e.stat));
    let sqp_feas = median(&mut collect(Method::Sqp, |e| e.feas));
    let base_stat = median(&mut collect(Method::Subgradient, |e| e.stat));
    let base_feas = median(&mut collect(Method::Subgradient, |e| e.feas));
    let sqp_calls: u64 = runs.iter().filter(|r| r.key.method == Method::Sqp).map(|r| r.oracle_calls()).sum();
    let base_calls: u64 = runs.iter().filter(|r| r.key.method == Method::Subgradient).map(|r| r.oracle_calls()).sum();
    let c7 = verdict(
        sqp_stat < base_stat && sqp_feas < base_feas && base_calls >= sqp_calls,
        format!(
            "median stat sqp {sqp_stat:.2e} vs baseline {base_stat:.2e}; median feas sqp {sqp_feas:.2e} vs baseline {base_feas:.2e}; oracle calls {sqp_calls} vs {base_calls}"
        ),
    );
    (c6, sqp_time, c7)
}

fn criterion_8() -> Verdict {
    let noise = NoiseLevel(1e-2, 1e-2, 1e-1);
    let per_problem = |beta: BetaMode| -> Vec<f64> {
        let runs = run_experiment(&suite_config(vec![Method::Sqp], noise, beta)).expect("experiment");
        BUILTIN_NAMES
            .iter()
            .map(|name| {
                let mut stats: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.key.problem == *name)
                    .map(|r| r.best.as_ref().map_or(f64::INFINITY, |b| b.errors.stat))
                    .collect();
                median(&mut stats)
            })
            .collect()
    };
    let dimin = per_problem(BetaMode::Diminishing);
    let constant = per_problem(BetaMode::Constant(0.1));
    let wins = dimin.iter().zip(&constant).filter(|(d, c)| d <= c).count();
    let detail = BUILTIN_NAMES
        .iter()
        .zip(dimin.iter().zip(&constant))
        .map(|(n, (d, c))| format!("{n} {d:.1e}/{c:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(wins >= 3, format!("diminishing <= constant on {wins}/5 (median stat dimin/const: {detail})"))
}

fn criterion_9() -> Verdict {
    let cfg = ExperimentConfig {
        problems: vec!["logistic-synthetic".into()],
        methods: vec![Method::Sqp],
        beta_mode: BetaMode::Constant(1.0),
        seeds: vec![1, 2, 3, 4, 5],
        iterations: 1000,
        logistic: LogisticSettings { n_samples: 2000, n_features: 20, ..LogisticSettings::default() },
        ..ExperimentConfig::default()
    };
    let runs = run_experiment(&cfg).expect("experiment");
    let feas: Vec<f64> = runs.iter().map(|r| r.best.as_ref().map_or(f64::INFINITY, |b| b.errors.feas)).collect();
    let good = feas.iter().filter(|&&f| f <= 1e-4).count();
    let mut detail = format!(
        "{good}/5 seeds with best feas <= 1e-4 (best feas: {})",
        feas.iter().map(|f| format!("{f:.1e}")).collect::<Vec<_>>().join(", ")
    );
    if let Some(f) = failures(&runs) {
        detail.push_str(&format!("; failure: {f}"));
    }
    verdict(good >= 4, detail)
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stosqp")).args(args).output().expect("spawn cli")
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| {
        let x = fs::read(a.join(n)).unwrap_or_default();
        !x.is_empty() && x == fs::read(b.join(n)).unwrap_or_default()
    })
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let config = serde_json::json!({
        "problems": ["quad-plane", "circle-two", "logistic-synthetic"],
        "methods": ["sqp", "subgradient"],
        "noise_grid": [[1e-4, 1e-4, 1e-2], [1e-2, 1e-2, 1e-1]],
        "seeds": [1, 2, 3],
        "iterations": 200,
        "tau_sweep": [1e-2, 1e-1, 1.0],
        "logistic": {"n_samples": 300, "n_features": 12, "pool_size": 200, "b1": 32, "b2": 32}
    });
    fs::write(p("config.json"), config.to_string()).unwrap();
    let mut checks = Vec::new();
    for (out, workers) in [("serial", "1"), ("parallel", "4"), ("parallel2", "3")] {
        let o = run_cli(&["experiment", &p("config.json"), "--output-dir", &p(out), "--workers", workers]);
        checks.push(o.status.code() == Some(0));
    }
    let tables = ["runs.csv", "best.csv", "summary.csv"];
    let experiment_same = same_files(&dir.path().join("serial"), &dir.path().join("parallel"), &tables)
        && same_files(&dir.path().join("serial"), &dir.path().join("parallel2"), &tables);
    for out in ["solve1.csv", "solve2.csv"] {
        let o = run_cli(&[
            "solve", "--problem", "rosenbrock-eq", "--eps-g", "1e-2", "--eps-c", "1e-2", "--eps-j", "1e-1", "--beta",
            "const:0.1", "--iters", "300", "--seed", "9", "--out", &p(out),
        ]);
        checks.push(o.status.code() == Some(0));
    }
    for out in ["gen1", "gen2"] {
        fs::create_dir_all(p(out)).unwrap();
        let o = run_cli(&[
            "gen-data", "--n", "8", "--N", "100", "--seed", "7", "--out", &p(&format!("{out}/data.txt")), "--pool-out",
            &p(&format!("{out}/pool.csv")), "--pool-size", "20",
        ]);
        checks.push(o.status.code() == Some(0));
    }
    let solve_same = same_files(dir.path(), dir.path(), &["solve1.csv"])
        && fs::read(p("solve1.csv")).unwrap() == fs::read(p("solve2.csv")).unwrap();
    let gen_same = same_files(&dir.path().join("gen1"), &dir.path().join("gen2"), &["data.txt", "pool.csv"]);
    let all_ok = checks.iter().all(|&c| c);
    verdict(
        all_ok && experiment_same && solve_same && gen_same,
        format!(
            "exit codes ok: {all_ok}; experiment 1/3/4 workers identical: {experiment_same}; solve rerun identical: {solve_same}; gen-data rerun identical: {gen_same}"
        ),
    )
}

fn report(id: &str, limit: Duration, elapsed: Duration, v: Verdict) -> bool {
    let in_time = elapsed <= limit;
    let pass = v.pass && in_time;
    println!(
        "criterion {id:>2}: {} ({:.1}s, limit {}s) {}{}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        v.detail,
        if in_time { "" } else { " [over time limit]" }
    );
    pass
}

fn timed(f: impl FnOnce() -> Verdict) -> (Duration, Verdict) {
    let started = Instant::now();
    let v = f();
    (started.elapsed(), v)
}

fn main() {
    // `cargo test` passes harness flags such as --list; only run for a real invocation
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let mut passed = 0;
    let mut total = 0;
    let mut tally = |ok: bool| {
        total += 1;
        passed += usize::from(ok);
    };
    let (t, v) = timed(criterion_1);
    tally(report("1", secs(120), t, v));
    let (t, v) = timed(criterion_2);
    tally(report("2", secs(5), t, v));
    let (t, v) = timed(criterion_3);
    tally(report("3", secs(10), t, v));
    let (t, v) = timed(criterion_4);
    tally(report("4", secs(30), t, v));
    let (t, v) = timed(criterion_5);
    tally(report("5", secs(10), t, v));
    let started = Instant::now();
    let (c6, t6, c7) = criterion_6_and_7();
    let t7 = started.elapsed();
    tally(report("6", secs(300), t6, c6));
    tally(report("7", secs(900), t7, c7));
    let (t, v) = timed(criterion_8);
    tally(report("8", secs(600), t, v));
    let (t, v) = timed(criterion_9);
    tally(report("9", secs(300), t, v));
    let (t, v) = timed(criterion_10);
    tally(report("10", secs(60), t, v));
    println!("acceptance: {passed}/{total} criteria passed");
    if passed != total {
        std::process::exit(1);
    }
}
