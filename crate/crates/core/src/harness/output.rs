//! CSV serialization. Floats use the shortest round-trip exponent form so that
//! identical runs give identical bytes.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::Result;
use crate::metrics::{format_sci, select_best, summarize, ErrorPair};

use super::config::{Method, NoiseLevel};
use super::runner::{RunKey, RunOutcome};

pub const RUNS_HEADER: [&str; 17] = [
    "run_id",
    "problem",
    "method",
    "eps_g",
    "eps_c",
    "eps_j",
    "beta_mode",
    "seed",
    "tau_sweep_value",
    "k",
    "feas_err",
    "stat_err",
    "tau",
    "xi",
    "alpha",
    "d_norm",
    "model_reduction",
];

pub const BEST_HEADER: [&str; 16] = [
    "run_id",
    "problem",
    "method",
    "eps_g",
    "eps_c",
    "eps_j",
    "beta_mode",
    "seed",
    "tau_sweep_value",
    "best_k",
    "branch",
    "feas_err",
    "stat_err",
    "iterations",
    "oracle_calls",
    "status",
];

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn noise_fields(noise: Option<NoiseLevel>) -> [String; 3] {
    match noise {
        Some(NoiseLevel(g, c, j)) => [num(g), num(c), num(j)],
        None => Default::default(),
    }
}

fn key_fields(run_id: &str, key: &RunKey) -> Vec<String> {
    let [g, c, j] = noise_fields(key.noise);
    vec![
        run_id.to_string(),
        key.problem.clone(),
        key.method.to_string(),
        g,
        c,
        j,
        key.beta_mode.to_string(),
        key.seed.to_string(),
        opt(key.tau),
    ]
}

pub fn write_runs<W: Write>(out: W, runs: &[RunOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER)?;
    for run in runs {
        let prefix = key_fields(&run.run_id, &run.key);
        for r in &run.records {
            let sqp = r.sqp.as_ref();
            let mut row = prefix.clone();
            row.extend([
                r.k.to_string(),
                num(r.feas_err),
                num(r.stat_err),
                opt(sqp.map(|t| t.tau)),
                opt(sqp.map(|t| t.xi)),
                num(r.alpha),
                num(r.d_norm_sq.sqrt()),
                opt(sqp.map(|t| t.model_reduction)),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_best<W: Write>(out: W, runs: &[RunOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BEST_HEADER)?;
    for run in runs {
        let mut row = key_fields(&run.run_id, &run.key);
        match &run.best {
            Some(b) => row.extend([b.k.to_string(), b.branch.to_string(), num(b.errors.feas), num(b.errors.stat)]),
            None => row.extend([String::new(), String::new(), String::new(), String::new()]),
        }
        row.extend([run.records.len().to_string(), run.oracle_calls().to_string(), run.status()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Grouping used by the summary: problem, noise, schedule, method.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SummaryKey {
    problem_index: usize,
    noise_index: usize,
    method: Method,
}

/// `(problem_index, noise_index, seed)`.
type SweepKey = (usize, usize, u64);

/// Per-run best errors, with each subgradient `τ` sweep reduced to its best run.
pub fn reduced_results(runs: &[RunOutcome]) -> Vec<(&RunKey, ErrorPair)> {
    let mut sweeps: BTreeMap<SweepKey, Vec<(&RunKey, ErrorPair)>> = BTreeMap::new();
    let mut out = Vec::new();
    for run in runs {
        let Some(best) = &run.best else { continue };
        match run.key.method {
            Method::Sqp => out.push((&run.key, best.errors)),
            Method::Subgradient => sweeps
                .entry((run.key.problem_index, run.key.noise_index, run.key.seed))
                .or_default()
                .push((&run.key, best.errors)),
        }
    }
    for group in sweeps.into_values() {
        let pairs: Vec<ErrorPair> = group.iter().map(|(_, e)| *e).collect();
        let (i, _) = select_best(&pairs).expect("nonempty sweep");
        out.push(group[i]);
    }
    out
}

pub fn write_summary<W: Write>(out: W, runs: &[RunOutcome]) -> Result<()> {
    let reduced = reduced_results(runs);
    let mut labels: BTreeMap<SummaryKey, &RunKey> = BTreeMap::new();
    let keyed: Vec<(SummaryKey, ErrorPair)> = reduced
        .iter()
        .map(|(k, e)| {
            let sk = SummaryKey { problem_index: k.problem_index, noise_index: k.noise_index, method: k.method };
            labels.entry(sk.clone()).or_insert(k);
            (sk, *e)
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["problem", "method", "eps_g", "eps_c", "eps_j", "beta_mode", "count"].map(String::from).to_vec();
    for metric in ["feas", "stat"] {
        for stat in ["min", "q1", "median", "q3", "max", "mean"] {
            header.push(format!("{metric}_{stat}"));
        }
    }
    w.write_record(&header)?;
    for (sk, s) in summarize(&keyed) {
        let key = labels[&sk];
        let [g, c, j] = noise_fields(key.noise);
        let mut row = vec![key.problem.clone(), key.method.to_string(), g, c, j, key.beta_mode.to_string()];
        row.push(s.count.to_string());
        for q in [s.feas, s.stat] {
            row.extend([q.min, q.q1, q.median, q.q3, q.max, q.mean].map(format_sci));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1e-6, 123.456, 0.0, 2f64.sqrt()] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-4), "1e-4");
    }
}
