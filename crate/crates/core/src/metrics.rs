//! Exact-oracle error metrics, best-iterate selection and per-iteration
//! invariant checks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares_multiplier, Vector};
use crate::problems::ProblemOracle;
use crate::record::IterateRecord;
use crate::sqp::{PhiModel, SqpParams};

/// Feasibility gate of the best-iterate rule.
pub const FEAS_GATE: f64 = 1e-4;
/// Relative slack on the lemma inequalities.
pub const INVARIANT_SLACK: f64 = 1e-10;
/// Grid points used to sample `φ` on `(0, ᾱ^φ]`.
const PHI_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    /// `‖c(x)‖_∞`.
    pub feas: f64,
    /// `‖∇f(x) + ∇c(x)·y_LS‖_∞`.
    pub stat: f64,
}

impl ErrorPair {
    /// Infinity norm of the stacked KKT residual.
    pub fn stacked(&self) -> f64 {
        self.feas.max(self.stat)
    }
}

pub fn error_pair(problem: &dyn ProblemOracle, x: &Vector) -> Result<ErrorPair> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iterate"));
    }
    let c = problem.constraints(x);
    let g = problem.gradient(x);
    let jac = problem.jacobian(x);
    let (_, residual) = least_squares_multiplier(&g, &jac)?;
    let pair = ErrorPair { feas: c.amax(), stat: residual.amax() };
    if !(pair.feas.is_finite() && pair.stat.is_finite()) {
        return Err(Error::NonFinite("error metrics"));
    }
    Ok(pair)
}

/// Like [`error_pair`] but a rank-deficient Jacobian yields `stat = +∞`
/// instead of an error, so wandering iterates can still be ranked.
pub fn lenient_error_pair(problem: &dyn ProblemOracle, x: &Vector) -> Result<ErrorPair> {
    match error_pair(problem, x) {
        Err(Error::RankDeficient { .. }) => {
            Ok(ErrorPair { feas: problem.constraints(x).amax(), stat: f64::INFINITY })
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Kkt,
    Feasibility,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Kkt => "kkt",
            Branch::Feasibility => "feasibility",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestIterate {
    /// Position in the run.
    pub index: usize,
    /// Iteration counter of the selected record.
    pub k: u64,
    pub x: Vector,
    pub errors: ErrorPair,
    pub branch: Branch,
}

/// The selection rule on precomputed errors. When some iterate is within the
/// feasibility gate the minimizer of `max(stat, feas)` over all iterates wins,
/// even if that iterate is itself outside the gate. Ties go to the earliest.
pub fn select_best(pairs: &[ErrorPair]) -> Result<(usize, Branch)> {
    if pairs.is_empty() {
        return Err(Error::EmptyRun);
    }
    let min_feas = pairs.iter().map(|p| p.feas).fold(f64::INFINITY, f64::min);
    let (branch, key): (Branch, fn(&ErrorPair) -> f64) = if min_feas <= FEAS_GATE {
        (Branch::Kkt, ErrorPair::stacked)
    } else {
        (Branch::Feasibility, |p| p.feas)
    };
    let mut best = 0;
    for (i, p) in pairs.iter().enumerate().skip(1) {
        if key(p) < key(&pairs[best]) {
            best = i;
        }
    }
    Ok((best, branch))
}

/// Re-evaluates every logged point with the exact oracle, then selects.
pub fn best_iterate(records: &[IterateRecord], problem: &dyn ProblemOracle) -> Result<BestIterate> {
    let pairs = records
        .iter()
        .map(|r| lenient_error_pair(problem, &r.point()))
        .collect::<Result<Vec<_>>>()?;
    let (index, branch) = select_best(&pairs)?;
    let record = &records[index];
    Ok(BestIterate { index, k: record.k, x: record.point(), errors: pairs[index], branch })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InvariantTag {
    MeritPositive,
    MeritMonotone,
    MeritGap,
    ModelReduction,
    RatioFloor,
    StepOrdering,
    PhiSign,
    AlphaMinLeOne,
}

impl InvariantTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            InvariantTag::MeritPositive => "merit-positive",
            InvariantTag::MeritMonotone => "merit-monotone",
            InvariantTag::MeritGap => "merit-gap",
            InvariantTag::ModelReduction => "model-reduction",
            InvariantTag::RatioFloor => "ratio-floor",
            InvariantTag::StepOrdering => "step-ordering",
            InvariantTag::PhiSign => "phi-sign",
            InvariantTag::AlphaMinLeOne => "alpha-min-le-one",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub tag: InvariantTag,
    pub k: u64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] k={}: {}", self.tag.as_str(), self.k, self.detail)
    }
}

/// `lhs ≤ rhs` up to the relative slack over the given magnitudes.
fn le(lhs: f64, rhs: f64, magnitudes: &[f64]) -> bool {
    let scale: f64 = magnitudes.iter().map(|v| v.abs()).sum::<f64>() + lhs.abs() + rhs.abs();
    lhs <= rhs + INVARIANT_SLACK * scale
}

/// Per-iteration lemma checks. Records without SQP data produce no violations.
pub fn check_iteration_invariants(record: &IterateRecord, params: &SqpParams) -> Vec<Violation> {
    let Some(t) = &record.sqp else {
        return Vec::new();
    };
    let k = record.k;
    let mut out = Vec::new();
    let mut flag = |tag, detail: String| out.push(Violation { tag, k, detail });

    if !(t.tau > 0.0) {
        flag(InvariantTag::MeritPositive, format!("tau = {:e}", t.tau));
    }
    if let Some(trial) = t.tau_trial.finite() {
        let bound = (1.0 - params.eps_tau) * trial;
        if !le(t.tau, bound, &[]) {
            flag(InvariantTag::MeritGap, format!("tau {:e} > (1-eps_tau)*trial {bound:e}", t.tau));
        }
    }

    let quad = 0.5 * params.zeta * t.tau * record.d_norm_sq;
    let lin = params.sigma * t.cbar_l1;
    if !le(quad + lin, t.model_reduction, &[quad, lin]) {
        flag(InvariantTag::ModelReduction, format!("delta_l {:e} < {:e}", t.model_reduction, quad + lin));
    } else if record.d_norm_sq > 0.0 && !(t.model_reduction > 0.0) {
        flag(InvariantTag::ModelReduction, format!("delta_l {:e} not positive", t.model_reduction));
    }

    if let Some(trial) = t.xi_trial.finite() {
        if !le(0.5 * params.zeta, trial, &[]) {
            flag(InvariantTag::RatioFloor, format!("xi_trial {trial:e} < zeta/2"));
        }
    }

    let ordered = t.alpha_min > 0.0
        && le(t.alpha_min, t.alpha_max, &[])
        && le(t.alpha_max, t.alpha_phi, &[]);
    if !ordered {
        flag(
            InvariantTag::StepOrdering,
            format!("{:e} <= {:e} <= {:e} fails", t.alpha_min, t.alpha_max, t.alpha_phi),
        );
    }
    if !le(t.alpha_min, 1.0, &[]) {
        flag(InvariantTag::AlphaMinLeOne, format!("alpha_min {:e} > 1", t.alpha_min));
    }

    if record.d_norm_sq > 0.0 {
        let phi = PhiModel {
            eta: params.eta,
            beta: record.beta,
            delta_l: t.model_reduction,
            cbar_l1: t.cbar_l1,
            curvature: params.curvature(t.tau),
            d_norm_sq: record.d_norm_sq,
        };
        let worst = (1..=PHI_SAMPLES)
            .map(|i| t.alpha_phi * i as f64 / PHI_SAMPLES as f64)
            .find(|&a| phi.eval(a) > INVARIANT_SLACK * phi.scale(a));
        if let Some(a) = worst {
            flag(InvariantTag::PhiSign, format!("phi({a:e}) = {:e} > 0", phi.eval(a)));
        }
    }
    out
}

/// Checks `0 < τ̄_k ≤ τ̄_{k−1}` along a run, starting from `τ̄₀`.
pub fn check_merit_monotone(records: &[IterateRecord], params: &SqpParams) -> Vec<Violation> {
    let mut prev = params.tau0;
    let mut out = Vec::new();
    for r in records {
        let Some(t) = &r.sqp else { continue };
        if t.tau > prev {
            out.push(Violation {
                tag: InvariantTag::MeritMonotone,
                k: r.k,
                detail: format!("tau increased from {prev:e} to {:e}", t.tau),
            });
        }
        prev = t.tau;
    }
    out
}

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub count: usize,
    pub feas: Quantiles,
    pub stat: Quantiles,
}

/// Box-plot statistics per group, in key order.
pub fn summarize<K: Ord + Clone>(results: &[(K, ErrorPair)]) -> Vec<(K, GroupSummary)> {
    let mut groups: BTreeMap<K, Vec<ErrorPair>> = BTreeMap::new();
    for (key, pair) in results {
        groups.entry(key.clone()).or_default().push(*pair);
    }
    groups
        .into_iter()
        .map(|(key, pairs)| {
            let feas: Vec<f64> = pairs.iter().map(|p| p.feas).collect();
            let stat: Vec<f64> = pairs.iter().map(|p| p.stat).collect();
            let summary = GroupSummary { count: pairs.len(), feas: Quantiles::of(&feas), stat: Quantiles::of(&stat) };
            (key, summary)
        })
        .collect()
}

/// Scientific notation with two decimals and a two-digit signed exponent,
/// e.g. `9.05e-06`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problems::Builtin;
    use crate::record::{Extended, SqpTrace};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pairs(values: &[(f64, f64)]) -> Vec<ErrorPair> {
        values.iter().map(|&(feas, stat)| ErrorPair { feas, stat }).collect()
    }

    #[test]
    fn error_pair_examples() {
        let quad = Builtin::QuadPlane;
        let e = error_pair(&quad, &quad.known_solution().unwrap()).unwrap();
        assert!(e.feas < 1e-12 && e.stat < 1e-12);
        let sphere = Builtin::SphereLinear;
        let e = error_pair(&sphere, &Vector::from_row_slice(&[1.0, 0.0])).unwrap();
        assert_eq!(e.feas, 0.0);
        assert_abs_diff_eq!(e.stat, 1.0, epsilon = 1e-15);
        assert!(error_pair(&sphere, &Vector::from_row_slice(&[f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn selection_examples() {
        let p = pairs(&[(1e-3, 0.1), (5e-5, 0.3), (2e-5, 0.2)]);
        assert_eq!(select_best(&p).unwrap(), (0, Branch::Kkt));
        let p = pairs(&[(0.5, 0.1), (0.2, 0.9)]);
        assert_eq!(select_best(&p).unwrap(), (1, Branch::Feasibility));
        assert_eq!(select_best(&pairs(&[(3.0, 4.0)])).unwrap(), (0, Branch::Feasibility));
        assert!(matches!(select_best(&[]), Err(Error::EmptyRun)));
        let tied = pairs(&[(0.3, 0.1), (0.2, 0.9), (0.2, 0.1)]);
        assert_eq!(select_best(&tied).unwrap().0, 1);
    }

    fn clean_record() -> IterateRecord {
        IterateRecord {
            k: 1,
            x: vec![0.0, 0.0],
            beta: 1.0,
            alpha: 0.5,
            d_norm_sq: 1.0,
            feas_err: 0.0,
            stat_err: 0.0,
            oracle_calls: 1,
            sqp: Some(SqpTrace {
                tau: 1.0,
                tau_trial: Extended::Infinite,
                xi: 1.0,
                xi_trial: Extended::Finite(2.0),
                alpha_min: 0.5,
                alpha_max: 1.0,
                alpha_phi: 1.0,
                model_reduction: 2.0,
                cbar_l1: 1.0,
            }),
        }
    }

    #[test]
    fn clean_record_has_no_violations() {
        // eta=0.5, beta=1, Δl=2, c̄₁=1, τL+Γ=2, ‖d‖²=1: the root is exactly 1
        let params = SqpParams { lip_l: 1.0, lip_gamma: 1.0, ..SqpParams::default() };
        assert!(check_iteration_invariants(&clean_record(), &params).is_empty());
    }

    #[test]
    fn constructed_violations_are_tagged() {
        let params = SqpParams { lip_l: 1.0, lip_gamma: 1.0, ..SqpParams::default() };
        let mut r = clean_record();
        r.sqp.as_mut().unwrap().tau_trial = Extended::Finite(0.5);
        let v = check_iteration_invariants(&r, &params);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tag, InvariantTag::MeritGap);

        let mut r = clean_record();
        r.d_norm_sq = 0.0;
        r.sqp.as_mut().unwrap().model_reduction = 0.05;
        let v = check_iteration_invariants(&r, &params);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tag, InvariantTag::ModelReduction);

        let mut r = clean_record();
        r.sqp.as_mut().unwrap().alpha_phi = 1.5;
        r.sqp.as_mut().unwrap().alpha_max = 1.5;
        let tags: Vec<_> = check_iteration_invariants(&r, &params).iter().map(|v| v.tag).collect();
        assert_eq!(tags, vec![InvariantTag::PhiSign]);
    }

    #[test]
    fn monotone_merit_is_checked() {
        let params = SqpParams::default();
        let mut second = clean_record();
        second.k = 2;
        second.sqp.as_mut().unwrap().tau = 1.5;
        let v = check_merit_monotone(&[clean_record(), second], &params);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].k, 2);
    }

    #[test]
    fn quantile_examples() {
        let q = Quantiles::of(&[5.0, 1.0, 4.0, 2.0, 3.0]);
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max, q.mean), (1.0, 2.0, 3.0, 4.0, 5.0, 3.0));
        let q = Quantiles::of(&[7.5]);
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (7.5, 7.5, 7.5, 7.5, 7.5));
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn scientific_formatting() {
        assert_eq!(format_sci(9.05e-6), "9.05e-06");
        assert_eq!(format_sci(1.0), "1.00e+00");
        assert_eq!(format_sci(123456.0), "1.23e+05");
        assert_eq!(format_sci(0.0), "0.00e+00");
        assert_eq!(format_sci(-2.5e-12), "-2.50e-12");
    }

    #[test]
    fn summarize_groups_by_key() {
        let results = vec![
            ("b", ErrorPair { feas: 1.0, stat: 2.0 }),
            ("a", ErrorPair { feas: 9.05e-6, stat: 1.0 }),
            ("b", ErrorPair { feas: 3.0, stat: 4.0 }),
        ];
        let s = summarize(&results);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].0, "a");
        assert_eq!(format_sci(s[0].1.feas.mean), "9.05e-06");
        assert_eq!(s[1].1.count, 2);
        assert_eq!(s[1].1.stat.median, 3.0);
    }

    /// Wraps a built-in with permuted constraint rows, a shifted objective and
    /// a scaled objective.
    struct Transformed {
        inner: Builtin,
        perm: Vec<usize>,
        shift: f64,
        scale: f64,
    }

    impl ProblemOracle for Transformed {
        fn name(&self) -> &str {
            "transformed"
        }
        fn n(&self) -> usize {
            self.inner.n()
        }
        fn m(&self) -> usize {
            self.inner.m()
        }
        fn objective(&self, x: &Vector) -> f64 {
            self.scale * self.inner.objective(x) + self.shift
        }
        fn gradient(&self, x: &Vector) -> Vector {
            self.inner.gradient(x) * self.scale
        }
        fn constraints(&self, x: &Vector) -> Vector {
            let c = self.inner.constraints(x);
            Vector::from_iterator(c.len(), self.perm.iter().map(|&i| c[i]))
        }
        fn jacobian(&self, x: &Vector) -> Matrix {
            self.inner.jacobian(x).select_rows(self.perm.iter())
        }
        fn initial_point(&self) -> Vector {
            self.inner.initial_point()
        }
    }

    proptest! {
        #[test]
        fn error_pair_is_row_order_and_shift_invariant(
            x in proptest::collection::vec(-2.0f64..2.0, 4),
            shift in -10.0f64..10.0,
            swap in any::<bool>(),
        ) {
            let inner = Builtin::PowellLike;
            let perm = if swap { vec![1, 0] } else { vec![0, 1] };
            let t = Transformed { inner, perm, shift, scale: 1.0 };
            let x = Vector::from_vec(x);
            if let (Ok(a), Ok(b)) = (error_pair(&inner, &x), error_pair(&t, &x)) {
                prop_assert!((a.feas - b.feas).abs() <= 1e-14 * (1.0 + a.feas));
                prop_assert!((a.stat - b.stat).abs() <= 1e-10 * (1.0 + a.stat));
            }
        }

        #[test]
        fn scaled_objective_scales_the_residual(
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            scale in 0.01f64..100.0,
        ) {
            let inner = Builtin::CircleTwo;
            let t = Transformed { inner, perm: vec![0, 1], shift: 0.0, scale };
            let x = Vector::from_vec(x);
            let (g, jac) = (inner.gradient(&x), inner.jacobian(&x));
            if let Ok((_, r)) = least_squares_multiplier(&g, &jac) {
                let (_, rs) = least_squares_multiplier(&t.gradient(&x), &t.jacobian(&x)).unwrap();
                let diff = (&rs - &r * scale).amax();
                prop_assert!(diff <= 1e-9 * scale * (1.0 + r.amax()));
            }
        }
    }
}
