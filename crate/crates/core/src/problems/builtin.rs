use std::f64::consts::FRAC_1_SQRT_2;

use super::ProblemOracle;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub const BUILTIN_NAMES: [&str; 5] = ["sphere-linear", "quad-plane", "rosenbrock-eq", "circle-two", "powell-like"];

/// Linear term of `powell-like`, chosen so that `(1, −1, 1, 1)` is a KKT point
/// with multipliers `(0.5, 0.1)`.
const POWELL_LINEAR: [f64; 4] = [0.9, 12.9, -9.1, -1.1];

/// Analytic equality-constrained test problems with known KKT points.
///
/// | name | n | m | x₁ | solution |
/// |---|---|---|---|---|
/// | `sphere-linear` | 2 | 1 | (2, 0) | −(1, 1)/√2 |
/// | `quad-plane` | 5 | 1 | (0.5, −0.3, 0.8, 0.1, 0.4) | (0.2, …, 0.2) |
/// | `rosenbrock-eq` | 2 | 1 | (1.2, 0.8) | (1, 1) |
/// | `circle-two` | 3 | 2 | (0.5, 1, 0.5) | (1/√2, 1/√2, 0) |
/// | `powell-like` | 4 | 2 | (2, −1, 0.5, 0.5) | (1, −1, 1, 1) |
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `min x₁ + x₂  s.t. ‖x‖² = 1`.
    SphereLinear,
    /// `min ½‖x‖²  s.t. Σxᵢ = 1`.
    QuadPlane,
    /// `min 100(x₂ − x₁²)² + (1 − x₁)²  s.t. x₁² + x₂² = 2`.
    RosenbrockEq,
    /// `min ½((x₁−2)² + (x₂−2)² + x₃²)  s.t. x₁² + x₂² = 1, x₁ + x₂ + x₃ = √2`.
    CircleTwo,
    /// `min (x₁+2x₂)² + (x₃−x₄)² + ¼(x₂−x₃)⁴ + ¼(x₁−x₄)⁴ + qᵀx  s.t. ‖x‖² = 4, Σxᵢ = 2`.
    PowellLike,
}

pub fn builtin_problem(name: &str) -> Result<Builtin> {
    match name {
        "sphere-linear" => Ok(Builtin::SphereLinear),
        "quad-plane" => Ok(Builtin::QuadPlane),
        "rosenbrock-eq" => Ok(Builtin::RosenbrockEq),
        "circle-two" => Ok(Builtin::CircleTwo),
        "powell-like" => Ok(Builtin::PowellLike),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

impl Builtin {
    pub fn all() -> [Builtin; 5] {
        [Builtin::SphereLinear, Builtin::QuadPlane, Builtin::RosenbrockEq, Builtin::CircleTwo, Builtin::PowellLike]
    }
}

fn v(values: &[f64]) -> Vector {
    Vector::from_row_slice(values)
}

impl ProblemOracle for Builtin {
    fn name(&self) -> &str {
        match self {
            Builtin::SphereLinear => "sphere-linear",
            Builtin::QuadPlane => "quad-plane",
            Builtin::RosenbrockEq => "rosenbrock-eq",
            Builtin::CircleTwo => "circle-two",
            Builtin::PowellLike => "powell-like",
        }
    }

    fn n(&self) -> usize {
        match self {
            Builtin::SphereLinear | Builtin::RosenbrockEq => 2,
            Builtin::QuadPlane => 5,
            Builtin::CircleTwo => 3,
            Builtin::PowellLike => 4,
        }
    }

    fn m(&self) -> usize {
        match self {
            Builtin::CircleTwo | Builtin::PowellLike => 2,
            _ => 1,
        }
    }

    fn objective(&self, x: &Vector) -> f64 {
        match self {
            Builtin::SphereLinear => x[0] + x[1],
            Builtin::QuadPlane => 0.5 * x.norm_squared(),
            Builtin::RosenbrockEq => 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            Builtin::CircleTwo => 0.5 * ((x[0] - 2.0).powi(2) + (x[1] - 2.0).powi(2) + x[2] * x[2]),
            Builtin::PowellLike => {
                let linear: f64 = POWELL_LINEAR.iter().zip(x.iter()).map(|(q, xi)| q * xi).sum();
                (x[0] + 2.0 * x[1]).powi(2)
                    + (x[2] - x[3]).powi(2)
                    + 0.25 * (x[1] - x[2]).powi(4)
                    + 0.25 * (x[0] - x[3]).powi(4)
                    + linear
            }
        }
    }

    fn gradient(&self, x: &Vector) -> Vector {
        match self {
            Builtin::SphereLinear => v(&[1.0, 1.0]),
            Builtin::QuadPlane => x.clone(),
            Builtin::RosenbrockEq => {
                let r = x[1] - x[0] * x[0];
                v(&[-400.0 * x[0] * r - 2.0 * (1.0 - x[0]), 200.0 * r])
            }
            Builtin::CircleTwo => v(&[x[0] - 2.0, x[1] - 2.0, x[2]]),
            Builtin::PowellLike => {
                let u = x[0] + 2.0 * x[1];
                let w = x[2] - x[3];
                let p = (x[1] - x[2]).powi(3);
                let q = (x[0] - x[3]).powi(3);
                v(&[
                    2.0 * u + q + POWELL_LINEAR[0],
                    4.0 * u + p + POWELL_LINEAR[1],
                    2.0 * w - p + POWELL_LINEAR[2],
                    -2.0 * w - q + POWELL_LINEAR[3],
                ])
            }
        }
    }

    fn constraints(&self, x: &Vector) -> Vector {
        match self {
            Builtin::SphereLinear => v(&[x.norm_squared() - 1.0]),
            Builtin::QuadPlane => v(&[x.sum() - 1.0]),
            Builtin::RosenbrockEq => v(&[x.norm_squared() - 2.0]),
            Builtin::CircleTwo => v(&[x[0] * x[0] + x[1] * x[1] - 1.0, x.sum() - 2f64.sqrt()]),
            Builtin::PowellLike => v(&[x.norm_squared() - 4.0, x.sum() - 2.0]),
        }
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let n = self.n();
        match self {
            Builtin::SphereLinear | Builtin::RosenbrockEq => Matrix::from_row_slice(1, n, (x * 2.0).as_slice()),
            Builtin::QuadPlane => Matrix::from_element(1, n, 1.0),
            Builtin::CircleTwo => Matrix::from_row_slice(2, 3, &[2.0 * x[0], 2.0 * x[1], 0.0, 1.0, 1.0, 1.0]),
            Builtin::PowellLike => {
                let mut jac = Matrix::from_element(2, 4, 1.0);
                jac.row_mut(0).copy_from(&(x * 2.0).transpose());
                jac
            }
        }
    }

    fn initial_point(&self) -> Vector {
        match self {
            Builtin::SphereLinear => v(&[2.0, 0.0]),
            Builtin::QuadPlane => v(&[0.5, -0.3, 0.8, 0.1, 0.4]),
            Builtin::RosenbrockEq => v(&[1.2, 0.8]),
            Builtin::CircleTwo => v(&[0.5, 1.0, 0.5]),
            Builtin::PowellLike => v(&[2.0, -1.0, 0.5, 0.5]),
        }
    }

    fn known_solution(&self) -> Option<Vector> {
        Some(match self {
            Builtin::SphereLinear => v(&[-FRAC_1_SQRT_2, -FRAC_1_SQRT_2]),
            Builtin::QuadPlane => Vector::from_element(5, 0.2),
            Builtin::RosenbrockEq => v(&[1.0, 1.0]),
            Builtin::CircleTwo => v(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]),
            Builtin::PowellLike => v(&[1.0, -1.0, 1.0, 1.0]),
        })
    }

    fn analytic_gamma(&self) -> Option<f64> {
        // every built-in constraint is quadratic or linear, so ∇cᵢ is Lipschitz
        // with constant ‖∇²cᵢ‖ = 2 or 0
        Some(match self {
            Builtin::QuadPlane => 0.0,
            _ => 2.0,
        })
    }
}
