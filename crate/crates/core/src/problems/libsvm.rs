//! LIBSVM sparse text format: `<label>( <index>:<value>)*`, 1-based indices.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Dense binary-classification data; labels are ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    let value: f64 = token
        .parse()
        .map_err(|_| Error::NonBinaryLabel { line, label: token.to_string() })?;
    if value == 1.0 {
        Ok(1.0)
    } else if value == -1.0 || value == 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::NonBinaryLabel { line, label: token.to_string() })
    }
}

/// Parses LIBSVM text. Absent indices are zero; `n_features` overrides the
/// inferred dimension (largest index seen).
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let malformed = || Error::MalformedLine { line: line_no, text: line.clone() };
        let mut tokens = content.split_whitespace();
        let label = parse_label(tokens.next().ok_or_else(malformed)?, line_no)?;
        let mut entries = Vec::new();
        let mut last = 0;
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val: f64 = val.parse().map_err(|_| malformed())?;
            // duplicates and out-of-order indices are both rejected
            if idx == 0 || idx <= last || !val.is_finite() {
                return Err(malformed());
            }
            if let Some(n) = n_features {
                if idx > n {
                    return Err(malformed());
                }
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        labels.push(label);
        rows.push(entries);
    }
    let n = n_features.unwrap_or(max_index);
    let mut features = Matrix::zeros(rows.len(), n);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, val) in entries {
            features[(r, c)] = val;
        }
    }
    Ok(Dataset { features, labels })
}

pub fn read_libsvm_file(path: &Path, n_features: Option<usize>) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file), n_features)
}

/// Writes the dataset in LIBSVM format, omitting zero entries. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn emit_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for (r, label) in data.labels.iter().enumerate() {
        let _ = write!(out, "{}", if *label > 0.0 { "+1" } else { "-1" });
        for c in 0..data.features.ncols() {
            let val = data.features[(r, c)];
            if val != 0.0 {
                let _ = write!(out, " {}:{}", c + 1, val);
            }
        }
        out.push('\n');
    }
    out
}
