//! Constrained binary logistic regression:
//!
//! ```text
//! min (1/N) Σ log(1 + exp(−yᵢ Xᵢᵀx))  s.t.  Ā x = ā,  ‖x‖² = a₂
//! ```
//!
//! where `(Ā, ā)` are the means of a finite pool of `K` noisy copies
//! `(A_{1,k}, a_{1,k})` of a base pair `(A₁, a₁)`. The deterministic oracle uses
//! the exact pool means, so mini-batches drawn from the pool are unbiased for it.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Dataset, ProblemOracle};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{Component, StreamKey};

/// Rows in the linear constraint block.
pub const LINEAR_ROWS: usize = 10;
const MAX_SCREEN_ATTEMPTS: u8 = 100;

#[derive(Debug, Clone)]
pub struct LogisticProblemConfig {
    pub dataset: Dataset,
    /// Pool size `K`.
    pub k: usize,
    pub a2: f64,
    /// Base `(A₁, a₁)`; drawn entrywise from `N(base_mean, base_var)` when absent.
    pub base: Option<(Matrix, Vector)>,
    pub base_mean: f64,
    pub base_var: f64,
    /// Variance of each `A_{1,k}` entry about `A₁`.
    pub perturbation_var: f64,
    /// Variance of each `a_{1,k}` entry about `a₁`.
    pub rhs_var: f64,
    /// Norm of the random initial point.
    pub x1_norm: f64,
}

impl LogisticProblemConfig {
    /// `K = 1000`, `a₂ = 1`, base entries `N(1, 100)`, pool variances `10⁻³/n` and `10⁻³`.
    pub fn with_defaults(dataset: Dataset) -> Self {
        let n = dataset.dim().max(1);
        Self {
            dataset,
            k: 1000,
            a2: 1.0,
            base: None,
            base_mean: 1.0,
            base_var: 100.0,
            perturbation_var: 1e-3 / n as f64,
            rhs_var: 1e-3,
            x1_norm: 0.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dataset.labels.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidParameter("labels must be ±1".into()));
        }
        if self.k == 0 || !(self.a2 > 0.0) || self.dataset.dim() == 0 {
            return Err(Error::InvalidParameter("need K >= 1, a2 > 0 and n >= 1".into()));
        }
        if self.perturbation_var < 0.0 || self.rhs_var < 0.0 || self.base_var < 0.0 {
            return Err(Error::InvalidParameter("variances must be nonnegative".into()));
        }
        if let Some((a, b)) = &self.base {
            if a.shape() != (LINEAR_ROWS, self.dataset.dim()) || b.len() != LINEAR_ROWS {
                return Err(Error::DimensionMismatch("base pair must be 10×n and 10".into()));
            }
        }
        Ok(())
    }
}

/// The realized `(A_{1,k}, a_{1,k})` pairs.
#[derive(Debug, Clone)]
pub struct ConstraintPool {
    pub matrices: Vec<Matrix>,
    pub rhs: Vec<Vector>,
}

impl ConstraintPool {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Mean over the given pool indices.
    pub fn mean_of(&self, indices: &[usize]) -> (Matrix, Vector) {
        let (rows, cols) = self.matrices[0].shape();
        let mut a = Matrix::zeros(rows, cols);
        let mut b = Vector::zeros(rows);
        for &i in indices {
            a += &self.matrices[i];
            b += &self.rhs[i];
        }
        let scale = 1.0 / indices.len() as f64;
        (a * scale, b * scale)
    }

    pub fn mean(&self) -> (Matrix, Vector) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.mean_of(&all)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticProblem {
    name: String,
    data: Dataset,
    pool: ConstraintPool,
    mean_a: Matrix,
    mean_b: Vector,
    a2: f64,
    x1: Vector,
}

/// `log(1 + e^{−t})` without overflow.
fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{−s})` without overflow.
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, mean: f64, var: f64) -> Matrix {
    let sd = var.sqrt();
    Matrix::from_fn(rows, cols, |_, _| mean + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Builds the problem and its constraint pool from `seed`.
///
/// When the base pair is drawn, draws whose mean linear system has no solution
/// inside the sphere `‖x‖² = a₂` are rejected, so the instance is feasible.
pub fn build_logistic_problem(cfg: &LogisticProblemConfig, name: &str, seed: u64) -> Result<LogisticProblem> {
    cfg.validate()?;
    let n = cfg.dataset.dim();
    let key = StreamKey::new(seed, &format!("logistic-setup/{name}"));
    let mut attempt = 0u8;
    loop {
        let mut rng = key.stream(0, Component::Setup, attempt);
        let (base_a, base_b) = match &cfg.base {
            Some((a, b)) => (a.clone(), b.clone()),
            None => (
                gaussian_matrix(&mut rng, LINEAR_ROWS, n, cfg.base_mean, cfg.base_var),
                gaussian_matrix(&mut rng, LINEAR_ROWS, 1, cfg.base_mean, cfg.base_var).column(0).into_owned(),
            ),
        };
        let mut matrices = Vec::with_capacity(cfg.k);
        let mut rhs = Vec::with_capacity(cfg.k);
        for _ in 0..cfg.k {
            matrices.push(&base_a + gaussian_matrix(&mut rng, LINEAR_ROWS, n, 0.0, cfg.perturbation_var));
            rhs.push(&base_b + gaussian_matrix(&mut rng, LINEAR_ROWS, 1, 0.0, cfg.rhs_var).column(0));
        }
        let pool = ConstraintPool { matrices, rhs };
        let (mean_a, mean_b) = pool.mean();
        attempt += 1;
        if cfg.base.is_none() && attempt < MAX_SCREEN_ATTEMPTS && !sphere_reachable(&mean_a, &mean_b, cfg.a2) {
            continue;
        }
        let x1 = {
            let mut rng = key.stream(1, Component::Setup, 0);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let raw = Vector::from_fn(n, |_, _| normal.sample(&mut rng));
            let norm = raw.norm();
            if norm > 0.0 {
                raw * (cfg.x1_norm / norm)
            } else {
                raw
            }
        };
        return Ok(LogisticProblem {
            name: name.to_string(),
            data: cfg.dataset.clone(),
            pool,
            mean_a,
            mean_b,
            a2: cfg.a2,
            x1,
        });
    }
}

/// Whether the minimum-norm solution of `a x = b` lies strictly inside the sphere.
fn sphere_reachable(a: &Matrix, b: &Vector, a2: f64) -> bool {
    // x_mn = aᵀ z with (a aᵀ) z = b
    let gram = a * a.transpose();
    match gram.cholesky() {
        Some(ch) => (a.transpose() * ch.solve(b)).norm_squared() < a2,
        None => false,
    }
}

/// Deterministic synthetic classification data: standard Gaussian features,
/// labels from a planted unit separator with Gaussian label noise of scale 0.5.
pub fn synthetic_dataset(n_samples: usize, n: usize, seed: u64) -> Dataset {
    let key = StreamKey::new(seed, "synthetic-dataset");
    let mut rng = key.stream(0, Component::Setup, 0);
    let mut w = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = w.norm();
    if norm > 0.0 {
        w /= norm;
    }
    let features = gaussian_matrix(&mut rng, n_samples, n, 0.0, 1.0);
    let labels = (0..n_samples)
        .map(|i| {
            let margin = features.row(i).transpose().dot(&w) + 0.5 * rng.sample::<f64, _>(StandardNormal);
            if margin >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Dataset { features, labels }
}

impl LogisticProblem {
    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn pool(&self) -> &ConstraintPool {
        &self.pool
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    /// Mean logistic-loss gradient over the given sample indices.
    pub fn batch_gradient(&self, x: &Vector, indices: &[usize]) -> Vector {
        let mut g = Vector::zeros(x.len());
        for &i in indices {
            let row = self.data.features.row(i);
            let y = self.data.labels[i];
            let t = y * row.transpose().dot(x);
            g.axpy(-y * sigmoid(-t), &row.transpose(), 1.0);
        }
        g / indices.len() as f64
    }

    /// Constraint values and Jacobian given a linear block `(a, b)`; the sphere row is exact.
    pub fn constraints_with(&self, x: &Vector, a: &Matrix, b: &Vector) -> (Vector, Matrix) {
        let n = x.len();
        let mut c = Vector::zeros(LINEAR_ROWS + 1);
        c.rows_mut(0, LINEAR_ROWS).copy_from(&(a * x - b));
        c[LINEAR_ROWS] = x.norm_squared() - self.a2;
        let mut jac = Matrix::zeros(LINEAR_ROWS + 1, n);
        jac.rows_mut(0, LINEAR_ROWS).copy_from(a);
        jac.row_mut(LINEAR_ROWS).copy_from(&(x * 2.0).transpose());
        (c, jac)
    }

    /// Least-squares distance check used by tests and diagnostics.
    pub fn feasible_point_exists(&self) -> bool {
        sphere_reachable(&self.mean_a, &self.mean_b, self.a2)
    }
}

impl ProblemOracle for LogisticProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn n(&self) -> usize {
        self.data.dim()
    }

    fn m(&self) -> usize {
        LINEAR_ROWS + 1
    }

    fn objective(&self, x: &Vector) -> f64 {
        let margins = &self.data.features * x;
        let total: f64 = margins.iter().zip(&self.data.labels).map(|(t, y)| softplus_neg(y * t)).sum();
        total / self.data.len() as f64
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let margins = &self.data.features * x;
        let weights =
            Vector::from_iterator(self.data.len(), margins.iter().zip(&self.data.labels).map(|(t, y)| -y * sigmoid(-y * t)));
        self.data.features.tr_mul(&weights) / self.data.len() as f64
    }

    fn constraints(&self, x: &Vector) -> Vector {
        self.constraints_with(x, &self.mean_a, &self.mean_b).0
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        self.constraints_with(x, &self.mean_a, &self.mean_b).1
    }

    fn initial_point(&self) -> Vector {
        self.x1.clone()
    }

    fn analytic_gamma(&self) -> Option<f64> {
        Some(2.0)
    }
}
