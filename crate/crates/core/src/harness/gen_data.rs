use std::io::Write;

use crate::error::Result;
use crate::problems::{build_logistic_problem, emit_libsvm, synthetic_dataset, ConstraintPool, Dataset, LogisticProblemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataArgs {
    pub n: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub pool_size: usize,
    /// Defaults to `10⁻³/n`.
    pub perturbation_var: Option<f64>,
    pub rhs_var: f64,
}

/// The synthetic dataset and, when `with_pool`, its constraint pool.
pub fn generate(args: &GenDataArgs, with_pool: bool) -> Result<(Dataset, Option<ConstraintPool>)> {
    let data = synthetic_dataset(args.n_samples, args.n, args.seed);
    if !with_pool {
        return Ok((data, None));
    }
    let mut cfg = LogisticProblemConfig::with_defaults(data.clone());
    cfg.k = args.pool_size;
    cfg.rhs_var = args.rhs_var;
    if let Some(v) = args.perturbation_var {
        cfg.perturbation_var = v;
    }
    let problem = build_logistic_problem(&cfg, "gen-data", args.seed)?;
    Ok((data, Some(problem.pool().clone())))
}

pub fn write_dataset<W: Write>(mut out: W, data: &Dataset) -> Result<()> {
    out.write_all(emit_libsvm(data).as_bytes())?;
    out.flush()?;
    Ok(())
}

/// One row per pool entry: `entry, A_1_1, …, A_r_n, a_1, …, a_r` (1-based).
pub fn write_pool<W: Write>(out: W, pool: &ConstraintPool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = pool.matrices.first() else {
        w.write_record(["entry"])?;
        w.flush()?;
        return Ok(());
    };
    let (rows, cols) = first.shape();
    let mut header = vec!["entry".to_string()];
    for i in 1..=rows {
        for j in 1..=cols {
            header.push(format!("A_{i}_{j}"));
        }
    }
    header.extend((1..=rows).map(|i| format!("a_{i}")));
    w.write_record(&header)?;
    for (k, (a, b)) in pool.matrices.iter().zip(&pool.rhs).enumerate() {
        let mut row = vec![(k + 1).to_string()];
        for i in 0..rows {
            for j in 0..cols {
                row.push(format!("{:e}", a[(i, j)]));
            }
        }
        row.extend(b.iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::parse_libsvm;

    fn args(n: usize, n_samples: usize) -> GenDataArgs {
        GenDataArgs { n, n_samples, seed: 7, pool_size: 5, perturbation_var: None, rhs_var: 1e-3 }
    }

    #[test]
    fn dataset_round_trips() {
        let (data, _) = generate(&args(20, 2000), false).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let back = parse_libsvm(buf.as_slice(), Some(20)).unwrap();
        assert_eq!(back.features.shape(), (2000, 20));
        assert_eq!(back.features, data.features);
        assert_eq!(back.labels, data.labels);
    }

    #[test]
    fn empty_dataset() {
        let (data, _) = generate(&args(20, 0), false).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        assert!(parse_libsvm(buf.as_slice(), Some(20)).unwrap().is_empty());
    }

    #[test]
    fn degenerate_pool_is_constant() {
        let mut a = args(12, 50);
        a.perturbation_var = Some(0.0);
        a.rhs_var = 0.0;
        let (_, pool) = generate(&a, true).unwrap();
        let pool = pool.unwrap();
        assert_eq!(pool.len(), 5);
        assert!(pool.matrices.iter().all(|m| *m == pool.matrices[0]));
        let mut buf = Vec::new();
        write_pool(&mut buf, &pool).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("entry,A_1_1,A_1_2"));
        assert!(lines[0].ends_with("a_10"));
        assert_eq!(lines[1].split(',').skip(1).collect::<Vec<_>>(), lines[2].split(',').skip(1).collect::<Vec<_>>());
    }
}
