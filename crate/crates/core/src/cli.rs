//! Problem files and the batch commands behind the `kneejerk` binary.
//!
//! A problem file is JSON:
//!
//! ```json
//! {
//!   "expression": {"op": "sum", "args": [{"op": "var", "index": 0}, {"op": "var", "index": 1}]},
//!   "blocks": [2],
//!   "weights": [1.0, 1.0],
//!   "init": "barycenter",
//!   "config": {"max_iters": 1000, "tol_div": 1e-12, "tol_w": 1e-14}
//! }
//! ```
//!
//! Exactly one of `expression`, `polynomial` (`{"n": .., "terms": [{"c": .., "e": [..]}]}`)
//! or `graph` (`{"vertices": .., "edges": [[u, v], ..]}`, whose discriminant
//! becomes the objective) must be present. `blocks` defaults to a single
//! block covering every coordinate, `init` to `"barycenter"`; an explicit
//! `init` vector must satisfy the block constraints within 1e-9 and is then
//! renormalized.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    check_log_concavity, check_log_log_convexity, fixtures::HarmonicPair, verify_argmax_property,
    verify_step_inequality, ConvexityReport,
};
use crate::discriminant::Graph;
use crate::expr::{ExprSpec, KneeJerkExpr, SparsePolynomial};
use crate::mapping::{iterate, IterationConfig, Trace, TraceStatus};
use crate::simplex::{BlockPoint, BlockStructure, INPUT_TOLERANCE};
use crate::{Error, Result};

/// Largest oracle grid accepted by [`run_oracle`].
pub const ORACLE_GRID_LIMIT: u128 = 100_000_000;
/// u-box sampled by the log-log-convexity probe.
pub const CONVEXITY_BOX: (f64, f64) = (-3.0, 3.0);
/// x-box sampled by the log-concavity probe.
pub const CONCAVITY_BOX: (f64, f64) = (0.05, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKeyword {
    Barycenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Keyword(InitKeyword),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_div: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_w: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut cfg: IterationConfig) -> IterationConfig {
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.tol_div {
            cfg.tol_div = v;
        }
        if let Some(v) = self.tol_w {
            cfg.tol_w = v;
        }
        cfg
    }
}

/// Problem file as written on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<ExprSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<SparsePolynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<Graph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigOverrides>,
}

/// Validated problem with every reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub file: ProblemFile,
    pub expr: KneeJerkExpr,
    pub structure: Arc<BlockStructure>,
    pub init: BlockPoint,
    pub config: IterationConfig,
}

fn field_error(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Problem(format!("{field}: {e}"))
}

/// Parses and validates a problem file.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Problem(e.to_string()))?;
    Problem::from_file(file)
}

impl Problem {
    pub fn from_file(file: ProblemFile) -> Result<Self> {
        let sources = [file.expression.is_some(), file.polynomial.is_some(), file.graph.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Problem(
                "exactly one of \"expression\", \"polynomial\" or \"graph\" is required".into(),
            ));
        }

        let declared = file.blocks.as_ref().map(|b| b.iter().sum::<usize>());
        let expr = if let Some(spec) = &file.expression {
            let dim = declared.unwrap_or_else(|| spec.min_dim());
            KneeJerkExpr::new(dim, spec.clone()).map_err(|e| field_error("expression", e))?
        } else {
            let (field, poly) = match (&file.polynomial, &file.graph) {
                (Some(p), _) => ("polynomial", p.clone()),
                (_, Some(g)) => ("graph", g.discriminant_polynomial().map_err(|e| field_error("graph", e))?),
                _ => unreachable!(),
            };
            poly.to_expression().map_err(|e| field_error(field, e))?
        };
        if expr.dim() == 0 {
            return Err(Error::Problem("expression: has no variables".into()));
        }

        let blocks = file.blocks.clone().unwrap_or_else(|| vec![expr.dim()]);
        let structure = Arc::new(
            BlockStructure::new(blocks, file.weights.clone()).map_err(|e| Error::Problem(e.to_string()))?,
        );
        if structure.dim() != expr.dim() {
            return Err(Error::Problem(format!(
                "blocks: total dimension {} does not match expression dimension {}",
                structure.dim(),
                expr.dim()
            )));
        }

        let init = match &file.init {
            None | Some(InitSpec::Keyword(InitKeyword::Barycenter)) => BlockPoint::barycenter(structure.clone()),
            Some(InitSpec::Point(v)) => {
                let p = BlockPoint::normalize(v, structure.clone()).map_err(|e| field_error("init", e))?;
                for i in 0..structure.num_blocks() {
                    let mass = structure.weighted_mass(i, v);
                    if (mass - 1.0).abs() > INPUT_TOLERANCE {
                        return Err(field_error(
                            "init",
                            format!("block {i} has weighted sum {mass}, expected 1"),
                        ));
                    }
                }
                p
            }
        };

        let config = file.config.clone().unwrap_or_default().apply(IterationConfig::default());
        config.validate().map_err(|e| field_error("config", e))?;
        Ok(Problem {
            file,
            expr,
            structure,
            init,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("problem file serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeSummary {
    pub status: TraceStatus,
    pub iterations: usize,
    pub point: Vec<f64>,
    pub log_value: f64,
    /// `null` when the terminal point is on the boundary.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub trace: Trace,
    pub summary: OptimizeSummary,
}

impl OptimizeOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.summary.status {
            TraceStatus::Degenerate => 3,
            _ => 0,
        }
    }
}

/// Iterates the problem from its initial point.
pub fn run_optimize(p: &Problem) -> Result<OptimizeOutcome> {
    let trace = iterate(&p.expr, &p.init, &p.config)?;
    let summary = OptimizeSummary {
        status: trace.status,
        iterations: trace.iterations,
        point: trace.point.coords().to_vec(),
        log_value: trace.log_value,
        residual: trace.residual.is_finite().then_some(trace.residual),
    };
    Ok(OptimizeOutcome { trace, summary })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Competitors drawn per base point by the argmax check.
    pub competitors: usize,
    pub concavity: bool,
    /// Adds a probe against a function outside the knee-jerk class; the
    /// report must then fail.
    pub inject_negative: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 1000,
            seed: 0,
            competitors: 100,
            concavity: false,
            inject_negative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub failures: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub samples: usize,
    pub competitors: usize,
    pub inequality: SweepSummary,
    pub argmax: SweepSummary,
    pub convexity: ConvexityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concavity: Option<ConvexityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_control: Option<ConvexityReport>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Worst {
    margin: f64,
    point: Vec<f64>,
    failures: usize,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            point: Vec::new(),
            failures: 0,
        }
    }

    fn observe(&mut self, margin: f64, pass: bool, x: &BlockPoint) {
        if !pass {
            self.failures += 1;
        }
        if margin < self.margin {
            self.margin = margin;
            self.point = x.coords().to_vec();
        }
    }

    fn finish(self) -> SweepSummary {
        SweepSummary {
            worst_margin: self.margin,
            worst_point: self.point,
            pass: self.failures == 0,
            failures: self.failures,
        }
    }
}

/// Runs the certificate sweep at seeded random interior points.
pub fn run_verify(p: &Problem, opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.samples == 0 || opts.competitors == 0 {
        return Err(Error::InvalidConfig("samples and competitors must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inequality = Worst::new();
    let mut argmax = Worst::new();
    for _ in 0..opts.samples {
        let x = BlockPoint::random(p.structure.clone(), &mut rng);
        let r = verify_step_inequality(&p.expr, &x)?;
        inequality.observe(r.margin, r.pass, &x);
        let a = verify_argmax_property(&p.expr, &x, opts.competitors, &mut rng)?;
        argmax.observe(a.worst_margin, a.pass, &x);
    }
    let convexity = check_log_log_convexity(&p.expr, opts.samples, CONVEXITY_BOX, &mut rng)?;
    let concavity = if opts.concavity {
        Some(check_log_concavity(&p.expr, opts.samples, CONCAVITY_BOX, &mut rng)?)
    } else {
        None
    };
    let negative_control = if opts.inject_negative {
        Some(check_log_log_convexity(&HarmonicPair, opts.samples, CONVEXITY_BOX, &mut rng)?)
    } else {
        None
    };
    let (inequality, argmax) = (inequality.finish(), argmax.finish());
    let pass = inequality.pass
        && argmax.pass
        && convexity.pass
        && concavity.as_ref().is_none_or(|c| c.pass)
        && negative_control.as_ref().is_none_or(|c| c.pass);
    Ok(VerifyReport {
        seed: opts.seed,
        samples: opts.samples,
        competitors: opts.competitors,
        inequality,
        argmax,
        convexity,
        concavity,
        negative_control,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub best_point: Vec<f64>,
    pub best_log_value: f64,
    pub resolution: usize,
    pub grid_points: u128,
    pub terminal_log_value: f64,
    /// Terminal `log Z` of the iteration minus the best grid value.
    pub gap: f64,
    /// Resolution-derived bound on `|gap|`.
    pub error_bound: f64,
    pub within_bound: bool,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Advances a composition of `sum(parts)` to the next one; `false` after the last.
fn next_composition(parts: &mut [u32]) -> bool {
    let last = parts.len() - 1;
    let tail = parts[last];
    parts[last] = 0;
    match (0..last).rev().find(|&p| parts[p] > 0) {
        Some(p) => {
            parts[p] -= 1;
            parts[p + 1] = tail + 1;
            true
        }
        None => {
            parts[last] = tail;
            false
        }
    }
}

fn grid_coords(counts: &[u32], s: &BlockStructure, resolution: usize) -> Vec<f64> {
    counts
        .iter()
        .zip(s.weights())
        .map(|(&k, &a)| k as f64 / resolution as f64 / a)
        .collect()
}

/// Exhaustive grid search over the feasible set, compared against the
/// terminal value of [`run_optimize`].
pub fn run_oracle(p: &Problem, resolution: usize) -> Result<OracleResult> {
    if resolution == 0 {
        return Err(Error::InvalidConfig("resolution must be positive".into()));
    }
    let s = &p.structure;
    let grid_points = s
        .sizes()
        .iter()
        .map(|&n| binomial((resolution + n - 1) as u128, (n - 1) as u128))
        .fold(1u128, |acc, c| acc.saturating_mul(c));
    if grid_points > ORACLE_GRID_LIMIT {
        return Err(Error::InvalidConfig(format!(
            "oracle grid has {grid_points} points (limit {ORACLE_GRID_LIMIT}); lower the resolution"
        )));
    }

    let mut counts = vec![0u32; s.dim()];
    for r in s.blocks() {
        counts[r.start] = resolution as u32;
    }
    let mut best_counts = counts.clone();
    let mut best_w = f64::NEG_INFINITY;
    loop {
        let w = p.expr.eval_log_closed(&grid_coords(&counts, s, resolution))?.log_value;
        if w > best_w {
            best_w = w;
            best_counts.copy_from_slice(&counts);
        }
        // Odometer over blocks, last block fastest.
        let mut advanced = false;
        for r in s.blocks().collect::<Vec<_>>().into_iter().rev() {
            if next_composition(&mut counts[r.clone()]) {
                advanced = true;
                break;
            }
            counts[r.clone()].fill(0);
            counts[r.start] = resolution as u32;
        }
        if !advanced {
            break;
        }
    }

    let grid_best = grid_coords(&best_counts, s, resolution);
    let mut best_point = grid_best.clone();
    let mut best_log_value = best_w;
    let bary = BlockPoint::barycenter(s.clone());
    let bary_w = p.expr.eval_log_closed(bary.coords())?.log_value;
    if bary_w > best_log_value {
        best_log_value = bary_w;
        best_point = bary.into_coords();
    }

    // Lipschitz estimate from single-unit moves around the best grid point.
    let mut lipschitz = 0.0f64;
    for r in s.blocks() {
        for from in r.clone() {
            if best_counts[from] == 0 {
                continue;
            }
            for to in r.clone().filter(|&t| t != from) {
                let mut nb = best_counts.clone();
                nb[from] -= 1;
                nb[to] += 1;
                let xn = grid_coords(&nb, s, resolution);
                let w = p.expr.eval_log_closed(&xn)?.log_value;
                if w.is_finite() && best_w.is_finite() {
                    let dist = xn.iter().zip(&grid_best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    lipschitz = lipschitz.max((w - best_w).abs() / dist);
                }
            }
        }
    }
    let min_weight = s.weights().iter().copied().fold(f64::INFINITY, f64::min);
    let radius = (s.dim() as f64).sqrt() / (resolution as f64 * min_weight);
    let error_bound = 2.0 * lipschitz * radius + 1e-12 * (1.0 + best_log_value.abs());

    let terminal_log_value = run_optimize(p)?.summary.log_value;
    let gap = terminal_log_value - best_log_value;
    Ok(OracleResult {
        best_point,
        best_log_value,
        resolution,
        grid_points,
        terminal_log_value,
        gap,
        error_bound,
        within_bound: gap.abs() <= error_bound,
    })
}
