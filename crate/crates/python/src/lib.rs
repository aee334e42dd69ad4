//! Python bindings: `import stosqp._stosqp` (or the `stosqp` package wrapper).
//!
//! Vectors cross the boundary as lists of floats and matrices as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stosqp::harness::{run_experiment, BetaMode, ExperimentConfig, Method, NoiseLevel, RunOutcome};
use stosqp::linalg::{Matrix, Vector};
use stosqp::metrics::ErrorPair;
use stosqp::problems::{builtin_problem, Builtin, ProblemOracle, BUILTIN_NAMES};
use stosqp::record::IterateRecord;
use stosqp::sqp::PhiModel;
use stosqp::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::UnknownProblem(_) | Error::Config(_) | Error::InvalidParameter(_) | Error::DimensionMismatch(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn vector(values: Vec<f64>) -> Vector {
    Vector::from_vec(values)
}

fn matrix(rows: Vec<Vec<f64>>, cols_if_empty: usize) -> PyResult<Matrix> {
    let cols = rows.first().map_or(cols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(Matrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Solves `[h jᵀ; j 0][d; y] = -[g; c]`; returns `(d, y)`.
#[pyfunction]
fn solve_kkt(h: Vec<Vec<f64>>, jac: Vec<Vec<f64>>, g: Vec<f64>, c: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let n = g.len();
    let sys = stosqp::linalg::KktSystem::new(matrix(h, n)?, matrix(jac, n)?, vector(g), vector(c)).map_err(to_py)?;
    let sol = stosqp::linalg::solve_kkt(&sys).map_err(to_py)?;
    Ok((list(&sol.d), list(&sol.y)))
}

/// Least-squares multiplier for `g + jᵀy`; returns `(y, residual)`.
#[pyfunction]
fn least_squares_multiplier(g: Vec<f64>, jac: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let n = g.len();
    let (y, r) = stosqp::linalg::least_squares_multiplier(&vector(g), &matrix(jac, n)?).map_err(to_py)?;
    Ok((list(&y), list(&r)))
}

/// Largest step keeping the step-model `φ` nonpositive.
#[pyfunction]
fn phi_root(eta: f64, beta: f64, delta_l: f64, cbar_l1: f64, curvature: f64, d_norm_sq: f64) -> PyResult<f64> {
    PhiModel { eta, beta, delta_l, cbar_l1, curvature, d_norm_sq }.largest_root().map_err(to_py)
}

/// Best-iterate rule over `(feas, stat)` pairs; returns `(index, branch)`.
#[pyfunction]
fn select_best(pairs: Vec<(f64, f64)>) -> PyResult<(usize, String)> {
    let pairs: Vec<ErrorPair> = pairs.into_iter().map(|(feas, stat)| ErrorPair { feas, stat }).collect();
    let (i, branch) = stosqp::metrics::select_best(&pairs).map_err(to_py)?;
    Ok((i, branch.to_string()))
}

/// Parses LIBSVM text; returns `(rows, labels)`.
#[pyfunction]
#[pyo3(signature = (text, n_features=None))]
fn parse_libsvm(text: &str, n_features: Option<usize>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let data = stosqp::problems::parse_libsvm(text.as_bytes(), n_features).map_err(to_py)?;
    Ok((rows(&data.features), data.labels))
}

#[pyfunction]
fn builtin_names() -> Vec<&'static str> {
    BUILTIN_NAMES.to_vec()
}

/// One of the built-in test problems with exact oracles.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: Builtin,
}

impl PyProblem {
    fn check(&self, x: &[f64]) -> PyResult<Vector> {
        if x.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.inner.n(), x.len())));
        }
        Ok(Vector::from_row_slice(x))
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { inner: builtin_problem(name).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.objective(&self.check(&x)?))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.gradient(&self.check(&x)?)))
    }

    fn constraints(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.constraints(&self.check(&x)?)))
    }

    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.jacobian(&self.check(&x)?)))
    }

    fn initial_point(&self) -> Vec<f64> {
        list(&self.inner.initial_point())
    }

    fn known_solution(&self) -> Option<Vec<f64>> {
        self.inner.known_solution().as_ref().map(list)
    }

    /// `(feas, stat)` at `x`.
    fn errors(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let e = stosqp::metrics::error_pair(&self.inner, &self.check(&x)?).map_err(to_py)?;
        Ok((e.feas, e.stat))
    }

    fn __repr__(&self) -> String {
        format!("Problem('{}', n={}, m={})", self.inner.name(), self.inner.n(), self.inner.m())
    }
}

fn record_dict<'py>(py: Python<'py>, r: &IterateRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", r.k)?;
    d.set_item("x", r.x.clone())?;
    d.set_item("beta", r.beta)?;
    d.set_item("alpha", r.alpha)?;
    d.set_item("d_norm", r.d_norm_sq.sqrt())?;
    d.set_item("feas_err", r.feas_err)?;
    d.set_item("stat_err", r.stat_err)?;
    d.set_item("oracle_calls", r.oracle_calls)?;
    if let Some(s) = &r.sqp {
        d.set_item("tau", s.tau)?;
        d.set_item("xi", s.xi)?;
        d.set_item("alpha_min", s.alpha_min)?;
        d.set_item("alpha_max", s.alpha_max)?;
        d.set_item("model_reduction", s.model_reduction)?;
    }
    Ok(d)
}

fn outcome_dict<'py>(py: Python<'py>, run: &RunOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("run_id", &run.run_id)?;
    d.set_item("status", run.status())?;
    d.set_item("error", run.error.as_ref().map(|e| e.to_string()))?;
    d.set_item("tau", run.key.tau)?;
    let records = run.records.iter().map(|r| record_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("records", records)?;
    match &run.best {
        Some(b) => {
            let best = PyDict::new(py);
            best.set_item("k", b.k)?;
            best.set_item("x", list(&b.x))?;
            best.set_item("feas", b.errors.feas)?;
            best.set_item("stat", b.errors.stat)?;
            best.set_item("branch", b.branch.to_string())?;
            d.set_item("best", best)?;
        }
        None => d.set_item("best", py.None())?,
    }
    Ok(d)
}

/// Runs one method on one problem and returns a list of run dicts (one per
/// baseline `τ`, or a single SQP run).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (problem, eps=(0.0, 0.0, 0.0), beta="const:0.1", iters=1000, seed=1, method="sqp", master_seed=0))]
fn solve<'py>(
    py: Python<'py>,
    problem: &str,
    eps: (f64, f64, f64),
    beta: &str,
    iters: u64,
    seed: u64,
    method: &str,
    master_seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let method = match method {
        "sqp" => Method::Sqp,
        "subgradient" => Method::Subgradient,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let mut methods = vec![Method::Sqp];
    if method == Method::Subgradient {
        // baseline budgets are matched to the SQP run
        methods.push(Method::Subgradient);
    }
    let cfg = ExperimentConfig {
        problems: vec![problem.to_string()],
        methods,
        noise_grid: vec![NoiseLevel(eps.0, eps.1, eps.2)],
        beta_mode: BetaMode::parse(beta).map_err(to_py)?,
        seeds: vec![seed],
        master_seed,
        iterations: iters,
        workers: 1,
        ..ExperimentConfig::default()
    };
    let runs = py.detach(|| run_experiment(&cfg)).map_err(to_py)?;
    runs.iter().filter(|r| r.key.method == method).map(|r| outcome_dict(py, r)).collect()
}

#[pymodule]
fn _stosqp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(solve_kkt, m)?)?;
    m.add_function(wrap_pyfunction!(least_squares_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(phi_root, m)?)?;
    m.add_function(wrap_pyfunction!(select_best, m)?)?;
    m.add_function(wrap_pyfunction!(parse_libsvm, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    Ok(())
}
