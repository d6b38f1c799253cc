//! The knee-jerk update and its iteration driver.
//!
//! One rule covers the plain simplex, the weighted simplex and products of
//! simplices: inside block `i`,
//!
//! ```text
//! x'_{ij} = (g_{ij} / a_{ij}) / sum_k g_{ik},    g = x * grad(Z) / Z.
//! ```
//!
//! A block whose gradient mass vanishes is left where it is (renormalized)
//! and flagged degenerate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::expr::{KneeJerkExpr, LogEval};
use crate::simplex::{block_divergences, BlockPoint};
use crate::{Error, Result};

/// Outcome of one application of the update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub point: BlockPoint,
    /// `log Z` at the input point.
    pub log_before: f64,
    /// `log Z` at [`point`](Self::point).
    pub log_after: f64,
    /// Per-block gradient mass `m_i = sum_j x_ij Z_{x_ij} / Z`.
    pub masses: Vec<f64>,
    /// Per-block `I((a x')_i ; (a x)_i)`.
    pub divergences: Vec<f64>,
    /// Certified lower bound `sum_i m_i I_i` on `log_after - log_before`.
    pub bound: f64,
    pub degenerate: Vec<bool>,
}

impl StepResult {
    /// Total per-step I-divergence across blocks.
    pub fn divergence(&self) -> f64 {
        self.divergences.iter().sum()
    }

    pub fn improvement(&self) -> f64 {
        self.log_after - self.log_before
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

fn check_dims(e: &KneeJerkExpr, x: &BlockPoint) -> Result<()> {
    if e.dim() != x.structure().dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: x.structure().dim(),
        });
    }
    Ok(())
}

/// Applies the update once. Zero coordinates stay zero.
pub fn knee_jerk_step(e: &KneeJerkExpr, x: &BlockPoint) -> Result<StepResult> {
    check_dims(e, x)?;
    let ev = e.eval_log_closed(x.coords())?;
    step_from_eval(e, x, &ev)
}

fn step_from_eval(e: &KneeJerkExpr, x: &BlockPoint, ev: &LogEval) -> Result<StepResult> {
    let s = x.structure();
    let a = s.weights();
    let mut next = x.coords().to_vec();
    let mut masses = Vec::with_capacity(s.num_blocks());
    let mut degenerate = Vec::with_capacity(s.num_blocks());
    for (i, r) in s.blocks().enumerate() {
        let m = ev.mass(r.clone());
        if m > 0.0 {
            for j in r {
                next[j] = ev.grad[j] / a[j] / m;
            }
            degenerate.push(false);
        } else {
            let total = s.weighted_mass(i, x.coords());
            for j in r {
                next[j] = x.coords()[j] / total;
            }
            degenerate.push(true);
        }
        masses.push(m);
    }
    let divergences = block_divergences(&next, x.coords(), s)?;
    let bound = masses
        .iter()
        .zip(&divergences)
        .map(|(&m, &d)| if m > 0.0 { m * d } else { 0.0 })
        .sum();
    let log_after = e.eval_log_closed(&next)?.log_value;
    Ok(StepResult {
        point: BlockPoint::from_parts(next, s.clone()),
        log_before: ev.log_value,
        log_after,
        masses,
        divergences,
        bound,
        degenerate,
    })
}

/// `max_i max_j |g_ij / (a_ij x_ij) - m_i| / (m_i + 1)`.
///
/// Zero exactly at fixed points of the update, i.e. where `Z_{x_j} / Z` is
/// proportional to the weights inside every block.
pub fn criticality_residual(e: &KneeJerkExpr, x: &BlockPoint) -> Result<f64> {
    check_dims(e, x)?;
    if let Some(index) = x.first_zero() {
        return Err(Error::Boundary { index });
    }
    let ev = e.eval_log(x.coords())?;
    Ok(residual_from_eval(x, &ev))
}

fn residual_from_eval(x: &BlockPoint, ev: &LogEval) -> f64 {
    let s = x.structure();
    let a = s.weights();
    let xs = x.coords();
    s.blocks()
        .map(|r| {
            let m = ev.mass(r.clone());
            r.map(|j| (ev.grad[j] / (a[j] * xs[j]) - m).abs() / (m + 1.0))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Stopping rules for [`iterate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub max_iters: usize,
    /// Stop once the per-step I-divergence drops below this.
    pub tol_div: f64,
    /// Stop once the improvement in `log Z` drops below this.
    pub tol_w: f64,
    /// Record every `stride`-th step (the last step is always recorded).
    pub stride: usize,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            max_iters: 100_000,
            tol_div: 1e-12,
            tol_w: 1e-14,
            stride: 1,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        for (name, v) in [("tol_div", self.tol_div), ("tol_w", self.tol_w)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.stride < 1 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStatus {
    Converged,
    MaxIterations,
    Degenerate,
}

impl std::fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TraceStatus::Converged => "converged",
            TraceStatus::MaxIterations => "max-iterations",
            TraceStatus::Degenerate => "degenerate",
        })
    }
}

/// State before step `iter`, plus what that step certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub log_value: f64,
    pub bound: f64,
    pub divergence: f64,
    /// NaN when the iterate is on the boundary.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: TraceStatus,
    /// Number of steps taken.
    pub iterations: usize,
    pub point: BlockPoint,
    pub log_value: f64,
    /// NaN when the terminal point is on the boundary.
    pub residual: f64,
}

impl Trace {
    /// CSV with header `iter,W,bound,divergence,residual` and a trailing
    /// `# status=...` metadata line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,W,bound,divergence,residual\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                r.iter, r.log_value, r.bound, r.divergence, r.residual
            );
        }
        let _ = writeln!(
            out,
            "# status={},iterations={},W={:e},residual={:e}",
            self.status, self.iterations, self.log_value, self.residual
        );
        out
    }
}

/// Iterates the update from `x0` until a stopping rule fires.
pub fn iterate(e: &KneeJerkExpr, x0: &BlockPoint, cfg: &IterationConfig) -> Result<Trace> {
    cfg.validate()?;
    check_dims(e, x0)?;
    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut status = TraceStatus::MaxIterations;
    let mut iterations = 0;
    let mut log_value = f64::NAN;
    for k in 0..cfg.max_iters {
        let ev = e.eval_log_closed(x.coords())?;
        let residual = if x.is_interior() {
            residual_from_eval(&x, &ev)
        } else {
            f64::NAN
        };
        let step = step_from_eval(e, &x, &ev)?;
        let divergence = step.divergence();
        iterations = k + 1;
        log_value = step.log_after;

        if step.any_degenerate() {
            status = TraceStatus::Degenerate;
        } else if divergence < cfg.tol_div || step.improvement() < cfg.tol_w {
            status = TraceStatus::Converged;
        }
        let last = status != TraceStatus::MaxIterations || iterations == cfg.max_iters;
        if k % cfg.stride == 0 || last {
            records.push(TraceRecord {
                iter: k,
                log_value: step.log_before,
                bound: step.bound,
                divergence,
                residual,
            });
        }
        x = step.point;
        if last {
            break;
        }
    }
    let residual = if x.is_interior() {
        criticality_residual(e, &x)?
    } else {
        f64::NAN
    };
    Ok(Trace {
        records,
        status,
        iterations,
        point: x,
        log_value,
        residual,
    })
}
