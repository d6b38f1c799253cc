//! Numerical certificates for the update.
//!
//! - [`tangent_lower_bound`]: first-order underestimate of `log Z(xbar) - log Z(x)`
//!   in u-coordinates, valid for every log-log-convex `Z`.
//! - [`verify_step_inequality`]: `log(Z'/Z) >= sum_i m_i I_i >= 0` for one step.
//! - [`verify_argmax_property`]: the update maximizes the tangent bound over
//!   the feasible set, checked against sampled competitors.
//! - [`check_log_log_convexity`] / [`check_log_concavity`]: Hessian eigenvalue
//!   probes in u- and x-coordinates.
//!
//! Eigenvalue thresholds scale with `1 + ||H||` so they stay meaningful for
//! objectives with large exponents.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::expr::{hessian_log_u, hessian_log_x, KneeJerkExpr, LogObjective, DEFAULT_HESSIAN_STEP};
use crate::mapping::knee_jerk_step;
use crate::simplex::BlockPoint;
use crate::{Error, Result};

/// Allowed shortfall of `log(Z'/Z)` below the divergence bound.
pub const INEQUALITY_SLACK: f64 = 1e-9;
/// Allowed negativity of the divergence bound.
pub const BOUND_SLACK: f64 = 1e-12;
/// Allowed shortfall of the update's tangent bound below a competitor's.
pub const ARGMAX_SLACK: f64 = 1e-9;
/// Relative eigenvalue tolerance for the curvature probes.
pub const CURVATURE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    /// `log(Z' / Z)`.
    pub lhs: f64,
    /// `sum_i m_i I((a x')_i ; (a x)_i)`.
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgmaxReport {
    pub samples: usize,
    /// Tangent bound attained by the update.
    pub update_bound: f64,
    /// Smallest `update_bound - competitor_bound` seen.
    pub worst_margin: f64,
    pub worst_competitor: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub samples: usize,
    /// Minimum eigenvalue for the convexity probe, maximum for the concavity
    /// probe, taken at the sample with the worst scaled value.
    pub worst_eigenvalue: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

/// `sum_j g_j(x) log(xbar_j / x_j)`.
///
/// `x` must be interior. Returns `-inf` when `xbar_j = 0` for some `g_j > 0`.
pub fn tangent_lower_bound<F: LogObjective + ?Sized>(f: &F, x: &[f64], xbar: &[f64]) -> Result<f64> {
    let ev = f.eval_log(x)?;
    tangent_bound_from_grad(&ev.grad, x, xbar)
}

fn tangent_bound_from_grad(g: &[f64], x: &[f64], xbar: &[f64]) -> Result<f64> {
    if xbar.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: xbar.len(),
        });
    }
    let mut total = 0.0;
    for j in 0..x.len() {
        if xbar[j].is_nan() || xbar[j] < 0.0 {
            return Err(Error::Domain {
                index: j,
                value: xbar[j],
            });
        }
        if g[j] == 0.0 {
            continue;
        }
        if xbar[j] == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += g[j] * (xbar[j] / x[j]).ln();
    }
    Ok(total)
}

fn require_interior(x: &BlockPoint) -> Result<()> {
    match x.first_zero() {
        Some(index) => Err(Error::Boundary { index }),
        None => Ok(()),
    }
}

/// Checks the step inequality at an interior point.
pub fn verify_step_inequality(e: &KneeJerkExpr, x: &BlockPoint) -> Result<InequalityReport> {
    require_interior(x)?;
    let step = knee_jerk_step(e, x)?;
    let lhs = step.improvement();
    let rhs = step.bound;
    let margin = lhs - rhs;
    Ok(InequalityReport {
        lhs,
        rhs,
        margin,
        pass: margin >= -INEQUALITY_SLACK && rhs >= -BOUND_SLACK,
    })
}

/// Samples `samples` feasible competitors and checks that none has a larger
/// tangent bound than the update.
pub fn verify_argmax_property<R: Rng + ?Sized>(
    e: &KneeJerkExpr,
    x: &BlockPoint,
    samples: usize,
    rng: &mut R,
) -> Result<ArgmaxReport> {
    require_interior(x)?;
    if samples == 0 {
        return Err(Error::InvalidConfig("argmax check needs at least one sample".into()));
    }
    let ev = e.eval_log(x.coords())?;
    let next = knee_jerk_step(e, x)?.point;
    let update_bound = tangent_bound_from_grad(&ev.grad, x.coords(), next.coords())?;
    let mut worst_margin = f64::INFINITY;
    let mut worst_competitor = Vec::new();
    for _ in 0..samples {
        let competitor = BlockPoint::random(x.structure().clone(), rng);
        let b = tangent_bound_from_grad(&ev.grad, x.coords(), competitor.coords())?;
        let margin = update_bound - b;
        if margin < worst_margin {
            worst_margin = margin;
            worst_competitor = competitor.into_coords();
        }
    }
    Ok(ArgmaxReport {
        samples,
        update_bound,
        worst_margin,
        worst_competitor,
        pass: worst_margin >= -ARGMAX_SLACK,
    })
}

fn spectrum(h: DMatrix<f64>) -> (f64, f64, f64) {
    let eig = SymmetricEigen::new(h).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max, min.abs().max(max.abs()))
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidConfig(format!("invalid sampling range [{lo}, {hi}]")));
    }
    Ok(())
}

/// Minimum eigenvalue of the u-Hessian of `log Z` at `samples` points with
/// `u` uniform in `[lo, hi]^n`. Passes iff every sample has
/// `lambda_min >= -1e-6 (1 + ||H||)`.
pub fn check_log_log_convexity<F: LogObjective + ?Sized, R: Rng + ?Sized>(
    f: &F,
    samples: usize,
    (lo, hi): (f64, f64),
    rng: &mut R,
) -> Result<ConvexityReport> {
    check_range(lo, hi)?;
    probe(f, samples, rng, |rng| rng.random_range(lo..hi).exp(), |x| {
        let (min, _, norm) = spectrum(hessian_log_u(f, x, DEFAULT_HESSIAN_STEP)?);
        Ok((min, -min / (1.0 + norm)))
    })
}

/// Maximum eigenvalue of the x-Hessian of `log Z` at `samples` points with
/// `x` uniform in `[lo, hi]^n`, `lo > 0`. Passes iff every sample has
/// `lambda_max <= 1e-6 (1 + ||H||)`.
pub fn check_log_concavity<F: LogObjective + ?Sized, R: Rng + ?Sized>(
    f: &F,
    samples: usize,
    (lo, hi): (f64, f64),
    rng: &mut R,
) -> Result<ConvexityReport> {
    check_range(lo, hi)?;
    if lo <= 0.0 {
        return Err(Error::InvalidConfig("concavity probe needs a positive range".into()));
    }
    probe(f, samples, rng, |rng| rng.random_range(lo..hi), |x| {
        let (_, max, norm) = spectrum(hessian_log_x(f, x, DEFAULT_HESSIAN_STEP)?);
        Ok((max, max / (1.0 + norm)))
    })
}

/// Shared sampling loop. `measure` returns the reported eigenvalue and a
/// scaled violation (positive means worse); a sample passes iff its
/// violation is at most [`CURVATURE_TOLERANCE`].
fn probe<F: LogObjective + ?Sized, R: Rng + ?Sized>(
    f: &F,
    samples: usize,
    rng: &mut R,
    mut coordinate: impl FnMut(&mut R) -> f64,
    measure: impl Fn(&[f64]) -> Result<(f64, f64)>,
) -> Result<ConvexityReport> {
    if samples == 0 {
        return Err(Error::InvalidConfig("probe needs at least one sample".into()));
    }
    let mut worst = (f64::NEG_INFINITY, f64::NAN, Vec::new());
    for _ in 0..samples {
        let x: Vec<f64> = (0..f.dim()).map(|_| coordinate(rng)).collect();
        let (eigenvalue, violation) = measure(&x)?;
        if violation > worst.0 {
            worst = (violation, eigenvalue, x);
        }
    }
    Ok(ConvexityReport {
        samples,
        worst_eigenvalue: worst.1,
        worst_point: worst.2,
        pass: worst.0 <= CURVATURE_TOLERANCE,
    })
}

/// Objectives outside the knee-jerk class, used as negative controls for the
/// probes. They implement [`LogObjective`] directly and never go through
/// [`KneeJerkExpr`] validation.
#[doc(hidden)]
pub mod fixtures {
    use crate::expr::{LogEval, LogObjective};
    use crate::{Error, Result};

    /// `Z(x, y) = x y / (x + y)`: increasing, but `log Z` is concave in
    /// `(log x, log y)`, with u-Hessian eigenvalue `-1/2` on the diagonal.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct HarmonicPair;

    impl LogObjective for HarmonicPair {
        fn dim(&self) -> usize {
            2
        }

        fn eval_log(&self, x: &[f64]) -> Result<LogEval> {
            if x.len() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
            }
            for (index, &value) in x.iter().enumerate() {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Domain { index, value });
                }
            }
            let s = x[0] + x[1];
            Ok(LogEval {
                log_value: x[0].ln() + x[1].ln() - s.ln(),
                grad: vec![x[1] / s, x[0] / s],
            })
        }
    }
}
