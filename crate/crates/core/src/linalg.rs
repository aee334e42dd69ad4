//! Dense KKT machinery: block elimination of the Newton-SQP system and
//! least-squares multipliers for stationarity measurement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative pivot threshold below which a factorization is declared rank deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Relative asymmetry accepted on `h`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// The linear system `[h jacᵀ; jac 0]·[d; y] = −[rhs_g; rhs_c]`.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub h: Matrix,
    pub jac: Matrix,
    pub rhs_g: Vector,
    pub rhs_c: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub d: Vector,
    pub y: Vector,
    pub residual_inf: f64,
    /// Smallest singular value of the block matrix, filled only on request.
    pub min_sv: Option<f64>,
}

impl KktSystem {
    pub fn new(h: Matrix, jac: Matrix, rhs_g: Vector, rhs_c: Vector) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::DimensionMismatch(format!("h is {}x{}", n, h.ncols())));
        }
        if jac.ncols() != n || rhs_g.len() != n || rhs_c.len() != jac.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "h {n}x{n}, jac {}x{}, rhs_g {}, rhs_c {}",
                jac.nrows(),
                jac.ncols(),
                rhs_g.len(),
                rhs_c.len()
            )));
        }
        ensure_finite(h.as_slice(), "h")?;
        ensure_finite(jac.as_slice(), "jac")?;
        ensure_finite(rhs_g.as_slice(), "rhs_g")?;
        ensure_finite(rhs_c.as_slice(), "rhs_c")?;
        let scale = h.amax().max(f64::MIN_POSITIVE);
        let asym = (&h - h.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidParameter(format!("h is not symmetric (asymmetry {asym:e})")));
        }
        Ok(Self { h, jac, rhs_g, rhs_c })
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn m(&self) -> usize {
        self.jac.nrows()
    }

    pub fn block_matrix(&self) -> Matrix {
        assemble_block(&self.h, &self.jac)
    }

    fn rhs_inf(&self) -> f64 {
        self.rhs_g.amax().max(self.rhs_c.amax())
    }

    fn residual_inf(&self, d: &Vector, y: &Vector) -> f64 {
        let top = &self.h * d + self.jac.tr_mul(y) + &self.rhs_g;
        let bottom = &self.jac * d + &self.rhs_c;
        top.amax().max(bottom.amax())
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Lower-triangular Cholesky factor with its pivot range.
struct Cholesky {
    l: Matrix,
    min_pivot: f64,
    max_pivot: f64,
}

impl Cholesky {
    /// Factors a symmetric matrix; `Err(row, pivot)` on the first nonpositive pivot.
    fn factor(a: &Matrix) -> std::result::Result<Self, (usize, f64)> {
        let n = a.nrows();
        let mut l = Matrix::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0_f64;
        for j in 0..n {
            let mut pivot = a[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if !(pivot > 0.0) {
                return Err((j, pivot));
            }
            min_pivot = min_pivot.min(pivot);
            max_pivot = max_pivot.max(pivot);
            let ljj = pivot.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l, min_pivot, max_pivot })
    }

    fn pivot_ratio(&self) -> f64 {
        if self.max_pivot > 0.0 {
            self.min_pivot / self.max_pivot
        } else {
            1.0
        }
    }

    fn solve_vec(&self, b: &Vector) -> Vector {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    fn solve_mat(&self, b: &Matrix) -> Matrix {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let s = x[i] - (0..i).map(|k| self.l[(i, k)] * x[k]).sum::<f64>();
            x[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let s = x[i] - ((i + 1)..n).map(|k| self.l[(k, i)] * x[k]).sum::<f64>();
            x[i] = s / self.l[(i, i)];
        }
    }
}

fn factor_spd(h: &Matrix) -> Result<Cholesky> {
    Cholesky::factor(h).map_err(|(row, pivot)| Error::NotSpd { row, pivot })
}

fn factor_schur(s: &Matrix) -> Result<Cholesky> {
    let chol = Cholesky::factor(s).map_err(|(_, _)| Error::RankDeficient { ratio: 0.0 })?;
    let ratio = chol.pivot_ratio();
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(chol)
}

/// Solves the KKT system by eliminating the primal block through the Schur
/// complement `S = jac·h⁻¹·jacᵀ`.
pub fn solve_kkt(sys: &KktSystem) -> Result<KktSolution> {
    let h_chol = factor_spd(&sys.h)?;
    let hinv_jt = h_chol.solve_mat(&sys.jac.transpose());
    let s_chol = if sys.m() == 0 {
        None
    } else {
        let schur = &sys.jac * &hinv_jt;
        Some(factor_schur(&((&schur + schur.transpose()) * 0.5))?)
    };
    let parts = KktParts { h: &h_chol, s: s_chol.as_ref(), hinv_jt: &hinv_jt };
    let (mut d, mut y) = parts.solve(sys, &sys.rhs_g, &sys.rhs_c);
    let mut residual_inf = sys.residual_inf(&d, &y);
    if residual_inf > 1e-10 * (1.0 + sys.rhs_inf()) {
        // one refinement sweep
        let r_top = &sys.h * &d + sys.jac.tr_mul(&y) + &sys.rhs_g;
        let r_bot = &sys.jac * &d + &sys.rhs_c;
        let (dd, dy) = parts.solve(sys, &r_top, &r_bot);
        let (d2, y2) = (&d + dd, &y + dy);
        let refined = sys.residual_inf(&d2, &y2);
        if refined < residual_inf {
            (d, y, residual_inf) = (d2, y2, refined);
        }
    }
    Ok(KktSolution { d, y, residual_inf, min_sv: None })
}

struct KktParts<'a> {
    h: &'a Cholesky,
    s: Option<&'a Cholesky>,
    hinv_jt: &'a Matrix,
}

impl KktParts<'_> {
    /// Solves `[h jacᵀ; jac 0]·[d; y] = −[g; c]`.
    fn solve(&self, sys: &KktSystem, g: &Vector, c: &Vector) -> (Vector, Vector) {
        let w = self.h.solve_vec(g);
        let y = match self.s {
            Some(s) => s.solve_vec(&(c - &sys.jac * &w)),
            None => Vector::zeros(0),
        };
        (-w - self.hinv_jt * &y, y)
    }
}

/// Same as [`solve_kkt`] but also records the smallest singular value of the block matrix.
pub fn solve_kkt_with_diagnostics(sys: &KktSystem) -> Result<KktSolution> {
    let mut sol = solve_kkt(sys)?;
    sol.min_sv = Some(min_singular_value(&sys.block_matrix())?);
    Ok(sol)
}

/// `y = argmin ‖g + jacᵀy‖₂` via a QR factorization of `jacᵀ`; returns `(y, g + jacᵀy)`.
pub fn least_squares_multiplier(g: &Vector, jac: &Matrix) -> Result<(Vector, Vector)> {
    if jac.ncols() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, jacobian has {} columns",
            g.len(),
            jac.ncols()
        )));
    }
    ensure_finite(g.as_slice(), "gradient")?;
    ensure_finite(jac.as_slice(), "jacobian")?;
    let m = jac.nrows();
    if m == 0 {
        return Ok((Vector::zeros(0), g.clone()));
    }
    if m > jac.ncols() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let qr = jac.transpose().qr();
    let r = qr.r();
    let ratio = pivot_ratio(&r);
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    let qtg = qr.q().tr_mul(g);
    let y = r
        .solve_upper_triangular(&(-qtg))
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let residual = g + jac.tr_mul(&y);
    Ok((y, residual))
}

/// `min rᵢᵢ² / max rᵢᵢ²` over the diagonal of an upper-triangular factor.
fn pivot_ratio(r: &Matrix) -> f64 {
    let k = r.nrows().min(r.ncols());
    let sq = (0..k).map(|i| r[(i, i)] * r[(i, i)]);
    let max = sq.clone().fold(0.0, f64::max);
    let min = sq.fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

/// Whether `jac` has full row rank under the [`RANK_TOL`] pivot test.
pub fn has_full_row_rank(jac: &Matrix) -> bool {
    let m = jac.nrows();
    if m == 0 {
        return true;
    }
    if m > jac.ncols() || !jac.iter().all(|v| v.is_finite()) {
        return false;
    }
    pivot_ratio(&jac.transpose().qr().r()) >= RANK_TOL
}

/// `[h jacᵀ; jac 0]`.
pub fn assemble_block(h: &Matrix, jac: &Matrix) -> Matrix {
    let n = h.nrows();
    let m = jac.nrows();
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(h);
    block.view_mut((n, 0), (m, n)).copy_from(jac);
    block.view_mut((0, n), (n, m)).copy_from(&jac.transpose());
    block
}

/// Smallest singular value; a diagnostic, never called on the iteration hot path.
pub fn min_singular_value(block: &Matrix) -> Result<f64> {
    ensure_finite(block.as_slice(), "block matrix")?;
    if block.is_empty() {
        return Ok(0.0);
    }
    let sv = block.singular_values();
    Ok(sv.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn eigen_bounds(h: &Matrix) -> Result<(f64, f64)> {
    ensure_finite(h.as_slice(), "h")?;
    let eig = h.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}
