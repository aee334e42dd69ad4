use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ProblemOracle;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::{Component, StreamKey};

/// Safety margin applied to sampled difference quotients.
pub const INFLATION: f64 = 1.5;
/// Floor for `L`; a linear objective has zero curvature but the solver needs `L > 0`.
pub const MIN_LIPSCHITZ: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipschitzMethod {
    Analytic,
    Sampled,
}

/// Lipschitz constants `L` of `∇f` and `Γ` of `∇c` (summed over rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub lip_l: f64,
    pub lip_gamma: f64,
    /// How `Γ` was obtained; `L` is always sampled.
    pub method: LipschitzMethod,
}

fn sample_in_ball<R: Rng>(rng: &mut R, center: &Vector, radius: f64) -> Vector {
    let n = center.len();
    let dir = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    if norm == 0.0 {
        return center.clone();
    }
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    center + dir * (r / norm)
}

/// Maximum gradient difference quotient over `n_samples` random pairs in the
/// ball of `radius` around `x1`, inflated by [`INFLATION`].
pub fn estimate_lipschitz(
    problem: &dyn ProblemOracle,
    x1: &Vector,
    n_samples: usize,
    radius: f64,
    stream: &StreamKey,
) -> Result<LipschitzEstimate> {
    if n_samples < 2 || !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need n_samples >= 2 and radius > 0, got {n_samples} and {radius}"
        )));
    }
    let mut rng = stream.stream(0, Component::Lipschitz, 0);
    let mut max_l = 0.0_f64;
    let mut row_max = vec![0.0_f64; problem.m()];
    let mut distinct = false;
    for _ in 0..n_samples {
        let u = sample_in_ball(&mut rng, x1, radius);
        let w = sample_in_ball(&mut rng, x1, radius);
        let dist = (&u - &w).norm();
        if dist == 0.0 {
            continue;
        }
        distinct = true;
        max_l = max_l.max((problem.gradient(&u) - problem.gradient(&w)).norm() / dist);
        let ju = problem.jacobian(&u);
        let jw = problem.jacobian(&w);
        for (i, best) in row_max.iter_mut().enumerate() {
            *best = best.max((ju.row(i) - jw.row(i)).norm() / dist);
        }
    }
    if !distinct {
        return Err(Error::DegenerateSamples);
    }
    let (lip_gamma, method) = match problem.analytic_gamma() {
        Some(g) => (g, LipschitzMethod::Analytic),
        None => (INFLATION * row_max.iter().sum::<f64>(), LipschitzMethod::Sampled),
    };
    Ok(LipschitzEstimate { lip_l: (INFLATION * max_l).max(MIN_LIPSCHITZ), lip_gamma, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Builtin;

    #[test]
    fn quadratic_objective_gives_inflated_unit_constant() {
        let p = Builtin::QuadPlane;
        let est = estimate_lipschitz(&p, &p.initial_point(), 50, 1.0, &StreamKey::new(1, "lip")).unwrap();
        assert!((est.lip_l - 1.5).abs() < 1e-12, "{}", est.lip_l);
        // linear constraint row contributes nothing
        assert_eq!(est.lip_gamma, 0.0);
        assert_eq!(est.method, LipschitzMethod::Analytic);
    }

    #[test]
    fn sampled_gamma_for_linear_rows_is_zero() {
        struct NoAnalytic(Builtin);
        impl ProblemOracle for NoAnalytic {
            fn name(&self) -> &str { self.0.name() }
            fn n(&self) -> usize { self.0.n() }
            fn m(&self) -> usize { self.0.m() }
            fn objective(&self, x: &Vector) -> f64 { self.0.objective(x) }
            fn gradient(&self, x: &Vector) -> Vector { self.0.gradient(x) }
            fn constraints(&self, x: &Vector) -> Vector { self.0.constraints(x) }
            fn jacobian(&self, x: &Vector) -> crate::linalg::Matrix { self.0.jacobian(x) }
            fn initial_point(&self) -> Vector { self.0.initial_point() }
        }
        let p = NoAnalytic(Builtin::QuadPlane);
        let est = estimate_lipschitz(&p, &p.initial_point(), 20, 1.0, &StreamKey::new(1, "lip")).unwrap();
        assert_eq!(est.lip_gamma, 0.0);
        assert_eq!(est.method, LipschitzMethod::Sampled);
        // sphere row: quotient of 2x is exactly 2, inflated to 3
        let s = NoAnalytic(Builtin::SphereLinear);
        let est = estimate_lipschitz(&s, &s.initial_point(), 20, 1.0, &StreamKey::new(1, "lip")).unwrap();
        assert!((est.lip_gamma - 3.0).abs() < 1e-12);
        assert_eq!(est.lip_l, MIN_LIPSCHITZ);
    }

    #[test]
    fn analytic_sphere_gamma_is_two() {
        let p = Builtin::SphereLinear;
        let est = estimate_lipschitz(&p, &p.initial_point(), 10, 1.0, &StreamKey::new(3, "x")).unwrap();
        assert_eq!(est.lip_gamma, 2.0);
    }

    #[test]
    fn invalid_sampling_parameters() {
        let p = Builtin::QuadPlane;
        let key = StreamKey::new(0, "x");
        assert!(estimate_lipschitz(&p, &p.initial_point(), 1, 1.0, &key).is_err());
        assert!(estimate_lipschitz(&p, &p.initial_point(), 5, 0.0, &key).is_err());
    }
}
