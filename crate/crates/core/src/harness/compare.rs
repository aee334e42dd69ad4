//! Pairs SQP best iterates with the baseline's best over its `τ` sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::metrics::{quantile, select_best, ErrorPair};

use super::output::num;

const REQUIRED: [&str; 10] = [
    "problem",
    "method",
    "eps_g",
    "eps_c",
    "eps_j",
    "beta_mode",
    "seed",
    "tau_sweep_value",
    "feas_err",
    "stat_err",
];

/// `(problem, eps_g, eps_c, eps_j, beta_mode, seed)`.
type GroupKey = (String, String, String, String, String, u64);

/// `(problem, eps_g, eps_c, eps_j, beta_mode)`.
pub type MedianKey = (String, String, String, String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Loss,
    Tie,
}

impl Outcome {
    fn of(sqp: f64, base: f64) -> Self {
        if sqp < base {
            Outcome::Win
        } else if sqp > base {
            Outcome::Loss
        } else {
            Outcome::Tie
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Loss => "loss",
            Outcome::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl Tally {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Win => self.wins += 1,
            Outcome::Loss => self.losses += 1,
            Outcome::Tie => self.ties += 1,
        }
    }
}

impl fmt::Display for Tally {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} wins, {} losses, {} ties", self.wins, self.losses, self.ties)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub group: GroupKey,
    pub sqp: ErrorPair,
    pub baseline: ErrorPair,
    pub baseline_tau: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub pairs: Vec<PairedRow>,
    pub stat: Tally,
    pub feas: Tally,
}

#[derive(Debug, Default)]
struct Group {
    sqp: Vec<ErrorPair>,
    baseline: Vec<(ErrorPair, String)>,
}

fn field(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).unwrap_or("")
}

fn parse_num(text: &str, what: &str) -> Result<f64> {
    text.parse().map_err(|_| Error::SchemaMismatch(format!("`{text}` in column {what} is not a number")))
}

fn ingest<R: Read>(reader: R, source: &str, groups: &mut BTreeMap<GroupKey, Group>) -> Result<()> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; REQUIRED.len()];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("{source} lacks column `{name}`")))?;
    }
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| field(&row, idx[i]);
        if get(8).is_empty() || get(9).is_empty() {
            continue; // run without iterates
        }
        let seed = get(6)
            .parse()
            .map_err(|_| Error::SchemaMismatch(format!("bad seed `{}` in {source}", get(6))))?;
        let key = (get(0).to_string(), get(2).to_string(), get(3).to_string(), get(4).to_string(), get(5).to_string(), seed);
        let errors = ErrorPair { feas: parse_num(get(8), "feas_err")?, stat: parse_num(get(9), "stat_err")? };
        let group = groups.entry(key).or_default();
        match get(1) {
            "sqp" => group.sqp.push(errors),
            "subgradient" => group.baseline.push((errors, get(7).to_string())),
            other => return Err(Error::SchemaMismatch(format!("unknown method `{other}` in {source}"))),
        }
    }
    Ok(())
}

/// Reads one or more best-iterate tables and pairs the methods per group.
pub fn compare<R: Read>(sources: Vec<(String, R)>) -> Result<Comparison> {
    let mut groups = BTreeMap::new();
    for (name, reader) in sources {
        ingest(reader, &name, &mut groups)?;
    }
    let mut out = Comparison { pairs: Vec::new(), stat: Tally::default(), feas: Tally::default() };
    for (group, g) in groups {
        if g.sqp.is_empty() || g.baseline.is_empty() {
            continue;
        }
        let (si, _) = select_best(&g.sqp)?;
        let base_pairs: Vec<ErrorPair> = g.baseline.iter().map(|(e, _)| *e).collect();
        let (bi, _) = select_best(&base_pairs)?;
        let row = PairedRow { group, sqp: g.sqp[si], baseline: base_pairs[bi], baseline_tau: g.baseline[bi].1.clone() };
        out.stat.add(Outcome::of(row.sqp.stat, row.baseline.stat));
        out.feas.add(Outcome::of(row.sqp.feas, row.baseline.feas));
        out.pairs.push(row);
    }
    if out.pairs.is_empty() {
        return Err(Error::SchemaMismatch("no group has both sqp and subgradient rows".into()));
    }
    Ok(out)
}

impl Comparison {
    pub fn write_pairs<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "problem", "eps_g", "eps_c", "eps_j", "beta_mode", "seed", "sqp_feas", "sqp_stat", "baseline_feas",
            "baseline_stat", "baseline_tau", "stat_outcome", "feas_outcome",
        ])?;
        for p in &self.pairs {
            let (problem, g, c, j, beta, seed) = &p.group;
            w.write_record([
                problem.clone(),
                g.clone(),
                c.clone(),
                j.clone(),
                beta.clone(),
                seed.to_string(),
                num(p.sqp.feas),
                num(p.sqp.stat),
                num(p.baseline.feas),
                num(p.baseline.stat),
                p.baseline_tau.clone(),
                Outcome::of(p.sqp.stat, p.baseline.stat).as_str().to_string(),
                Outcome::of(p.sqp.feas, p.baseline.feas).as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Medians over seeds per `(problem, noise, schedule)`.
    pub fn medians(&self) -> Vec<(MedianKey, [f64; 4], usize)> {
        let mut groups: BTreeMap<_, Vec<&PairedRow>> = BTreeMap::new();
        for p in &self.pairs {
            let (a, b, c, d, e, _) = &p.group;
            groups.entry((a.clone(), b.clone(), c.clone(), d.clone(), e.clone())).or_default().push(p);
        }
        groups
            .into_iter()
            .map(|(key, rows)| {
                let median = |f: &dyn Fn(&PairedRow) -> f64| {
                    let mut v: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                    v.sort_by(f64::total_cmp);
                    quantile(&v, 0.5)
                };
                let m = [
                    median(&|r| r.sqp.feas),
                    median(&|r| r.sqp.stat),
                    median(&|r| r.baseline.feas),
                    median(&|r| r.baseline.stat),
                ];
                (key, m, rows.len())
            })
            .collect()
    }

    pub fn write_medians<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "problem", "eps_g", "eps_c", "eps_j", "beta_mode", "seeds", "sqp_feas_median", "sqp_stat_median",
            "baseline_feas_median", "baseline_stat_median",
        ])?;
        for ((problem, g, c, j, beta), m, count) in self.medians() {
            let mut row = vec![problem, g, c, j, beta, count.to_string()];
            row.extend(m.map(num));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
