//! Knee-jerk expressions and sparse positive polynomials.
//!
//! Expressions are trees over variables, positive constants, sums, products
//! and positive powers. Every such tree is positive on the open orthant,
//! non-decreasing in each coordinate and log-log-convex. Evaluation happens
//! entirely in log domain: a forward pass computes the log of every node
//! (log-sum-exp at sums), and a reverse pass propagates adjoints with respect
//! to node logs, which yields `g_j = x_j Z_{x_j} / Z` at the variable leaves.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default finite-difference step, in u-coordinates, for Hessian probes.
pub const DEFAULT_HESSIAN_STEP: f64 = 1e-4;

/// Unvalidated expression tree, as read from JSON.
///
/// ```json
/// {"op": "prod", "args": [{"op": "var", "index": 0},
///                          {"op": "pow", "arg": {"op": "var", "index": 1}, "exponent": 2.5}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExprSpec {
    Var { index: usize },
    Const { value: f64 },
    Sum { args: Vec<ExprSpec> },
    Prod { args: Vec<ExprSpec> },
    Pow { arg: Box<ExprSpec>, exponent: f64 },
}

impl ExprSpec {
    pub fn var(index: usize) -> Self {
        ExprSpec::Var { index }
    }

    pub fn constant(value: f64) -> Self {
        ExprSpec::Const { value }
    }

    pub fn sum(args: Vec<ExprSpec>) -> Self {
        ExprSpec::Sum { args }
    }

    pub fn prod(args: Vec<ExprSpec>) -> Self {
        ExprSpec::Prod { args }
    }

    pub fn pow(arg: ExprSpec, exponent: f64) -> Self {
        ExprSpec::Pow {
            arg: Box::new(arg),
            exponent,
        }
    }

    /// Largest variable index plus one (0 for constant trees).
    pub fn min_dim(&self) -> usize {
        match self {
            ExprSpec::Var { index } => index + 1,
            ExprSpec::Const { .. } => 0,
            ExprSpec::Sum { args } | ExprSpec::Prod { args } => {
                args.iter().map(ExprSpec::min_dim).max().unwrap_or(0)
            }
            ExprSpec::Pow { arg, .. } => arg.min_dim(),
        }
    }
}

impl fmt::Display for ExprSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, args: &[ExprSpec], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (k, a) in args.iter().enumerate() {
                if k > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")
        };
        match self {
            ExprSpec::Var { index } => write!(f, "x{index}"),
            ExprSpec::Const { value } => write!(f, "{value}"),
            ExprSpec::Sum { args } => join(f, args, " + "),
            ExprSpec::Prod { args } => join(f, args, "*"),
            ExprSpec::Pow { arg, exponent } => write!(f, "{arg}^{exponent}"),
        }
    }
}

/// Log value and u-gradient of an objective at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEval {
    /// `W = log Z(x)`.
    pub log_value: f64,
    /// `g_j = d W / d log x_j = x_j Z_{x_j} / Z`.
    pub grad: Vec<f64>,
}

impl LogEval {
    /// Sum of the gradient over `range`.
    pub fn mass(&self, range: std::ops::Range<usize>) -> f64 {
        self.grad[range].iter().sum()
    }
}

/// Anything that can report `log Z` and its u-gradient on the open orthant.
///
/// [`KneeJerkExpr`] is the canonical implementor; the probes in
/// [`crate::diagnostics`] accept any implementor so that they can also be run
/// against functions outside the knee-jerk class.
pub trait LogObjective {
    fn dim(&self) -> usize;
    fn eval_log(&self, x: &[f64]) -> Result<LogEval>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Var(usize),
    /// Stores `log c`.
    Const(f64),
    Sum,
    Prod,
    Pow(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    op: Op,
    first_child: usize,
    child_count: usize,
}

/// Validated knee-jerk expression over `dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct KneeJerkExpr {
    dim: usize,
    spec: ExprSpec,
    // Post-order arena: children precede parents, the root is last.
    nodes: Vec<Node>,
    children: Vec<usize>,
    paths: Vec<String>,
}

impl KneeJerkExpr {
    /// Validates `spec` against the knee-jerk invariants and compiles it.
    pub fn new(dim: usize, spec: ExprSpec) -> Result<Self> {
        let mut expr = KneeJerkExpr {
            dim,
            spec: spec.clone(),
            nodes: Vec::new(),
            children: Vec::new(),
            paths: Vec::new(),
        };
        expr.compile(&spec, "root".to_string())?;
        Ok(expr)
    }

    fn compile(&mut self, spec: &ExprSpec, path: String) -> Result<usize> {
        let invalid = |reason: String| Error::InvalidExpression {
            path: path.clone(),
            reason,
        };
        let (op, kids): (Op, Vec<usize>) = match spec {
            ExprSpec::Var { index } => {
                if *index >= self.dim {
                    return Err(invalid(format!(
                        "variable index {index} out of range for dimension {}",
                        self.dim
                    )));
                }
                (Op::Var(*index), vec![])
            }
            ExprSpec::Const { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(invalid(format!("constant must be positive, got {value}")));
                }
                (Op::Const(value.ln()), vec![])
            }
            ExprSpec::Sum { args } | ExprSpec::Prod { args } => {
                let is_sum = matches!(spec, ExprSpec::Sum { .. });
                if args.is_empty() {
                    let kind = if is_sum { "sum" } else { "prod" };
                    return Err(invalid(format!("{kind} needs at least one argument")));
                }
                let mut kids = Vec::with_capacity(args.len());
                for (k, a) in args.iter().enumerate() {
                    kids.push(self.compile(a, format!("{path}/args[{k}]"))?);
                }
                (if is_sum { Op::Sum } else { Op::Prod }, kids)
            }
            ExprSpec::Pow { arg, exponent } => {
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return Err(invalid(format!("exponent must be positive, got {exponent}")));
                }
                let kid = self.compile(arg, format!("{path}/arg"))?;
                (Op::Pow(*exponent), vec![kid])
            }
        };
        let first_child = self.children.len();
        let child_count = kids.len();
        self.children.extend(kids);
        self.nodes.push(Node {
            op,
            first_child,
            child_count,
        });
        self.paths.push(path);
        Ok(self.nodes.len() - 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &ExprSpec {
        &self.spec
    }

    fn kids(&self, node: &Node) -> &[usize] {
        &self.children[node.first_child..node.first_child + node.child_count]
    }

    /// `log Z` and u-gradient on the open orthant. Every coordinate must be
    /// strictly positive and finite.
    pub fn eval_log(&self, x: &[f64]) -> Result<LogEval> {
        self.check_dim(x)?;
        for (index, &value) in x.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Domain { index, value });
            }
        }
        self.eval_unchecked(x)
    }

    /// Like [`eval_log`](Self::eval_log) but admits zero coordinates. Zero
    /// coordinates get `g_j = 0`; if `Z` itself vanishes the log value is
    /// `-inf` and the whole gradient is zero.
    pub(crate) fn eval_log_closed(&self, x: &[f64]) -> Result<LogEval> {
        self.check_dim(x)?;
        for (index, &value) in x.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Domain { index, value });
            }
        }
        self.eval_unchecked(x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn eval_unchecked(&self, x: &[f64]) -> Result<LogEval> {
        let mut logs = vec![0.0; self.nodes.len()];
        for (k, node) in self.nodes.iter().enumerate() {
            let kids = self.kids(node);
            let v = match node.op {
                Op::Var(i) => x[i].ln(),
                Op::Const(lc) => lc,
                Op::Sum => log_sum_exp(kids.iter().map(|&c| logs[c])),
                Op::Prod => kids.iter().map(|&c| logs[c]).sum(),
                Op::Pow(p) => p * logs[kids[0]],
            };
            if v.is_nan() {
                return Err(Error::NotANumber {
                    path: self.paths[k].clone(),
                });
            }
            logs[k] = v;
        }

        let root = self.nodes.len() - 1;
        let log_value = logs[root];
        let mut grad = vec![0.0; self.dim];
        if log_value == f64::NEG_INFINITY {
            return Ok(LogEval { log_value, grad });
        }

        let mut adj = vec![0.0; self.nodes.len()];
        adj[root] = 1.0;
        for k in (0..self.nodes.len()).rev() {
            let a = adj[k];
            // Dead subtrees (zero weight under some sum) stop here.
            if a == 0.0 {
                continue;
            }
            let node = &self.nodes[k];
            match node.op {
                Op::Var(i) => grad[i] += a,
                Op::Const(_) => {}
                Op::Sum => {
                    for &c in self.kids(node) {
                        adj[c] += a * (logs[c] - logs[k]).exp();
                    }
                }
                Op::Prod => {
                    for &c in self.kids(node) {
                        adj[c] += a;
                    }
                }
                Op::Pow(p) => adj[self.kids(node)[0]] += a * p,
            }
        }
        if let Some(k) = grad.iter().position(|g| g.is_nan()) {
            return Err(Error::NotANumber {
                path: format!("gradient[{k}]"),
            });
        }
        Ok(LogEval { log_value, grad })
    }
}

impl LogObjective for KneeJerkExpr {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_log(&self, x: &[f64]) -> Result<LogEval> {
        KneeJerkExpr::eval_log(self, x)
    }
}

impl fmt::Display for KneeJerkExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.spec.fmt(f)
    }
}

/// `log(sum(exp(v)))` without overflow. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Central-difference Hessian of `W` in u-coordinates.
///
/// Column `i` differentiates the exact u-gradient along `u_i` with step `h`;
/// the result is symmetrized by averaging the `(i, j)` and `(j, i)` entries.
pub fn hessian_log_u<F: LogObjective + ?Sized>(f: &F, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = f.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("hessian step must be positive, got {h}")));
    }
    // Validate the base point even though only shifted points are evaluated.
    f.eval_log(x)?;
    let (up, down) = (h.exp(), (-h).exp());
    let mut hess = DMatrix::zeros(n, n);
    let mut xs = x.to_vec();
    for i in 0..n {
        xs[i] = x[i] * up;
        let plus = f.eval_log(&xs)?;
        xs[i] = x[i] * down;
        let minus = f.eval_log(&xs)?;
        xs[i] = x[i];
        for j in 0..n {
            hess[(j, i)] = (plus.grad[j] - minus.grad[j]) / (2.0 * h);
        }
    }
    Ok(symmetrize(hess))
}

/// Central-difference Hessian of `log Z` in the original coordinates.
///
/// Uses relative steps `h * x_i` so that the shifted points stay positive.
pub fn hessian_log_x<F: LogObjective + ?Sized>(f: &F, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = f.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidConfig(format!("hessian step must be in (0, 1), got {h}")));
    }
    f.eval_log(x)?;
    let mut hess = DMatrix::zeros(n, n);
    let mut xs = x.to_vec();
    for i in 0..n {
        let s = h * x[i];
        xs[i] = x[i] + s;
        let plus = f.eval_log(&xs)?;
        let plus_x = xs.clone();
        xs[i] = x[i] - s;
        let minus = f.eval_log(&xs)?;
        let minus_x = xs.clone();
        xs[i] = x[i];
        for j in 0..n {
            let dp = plus.grad[j] / plus_x[j];
            let dm = minus.grad[j] / minus_x[j];
            hess[(j, i)] = (dp - dm) / (2.0 * s);
        }
    }
    Ok(symmetrize(hess))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// One monomial `c * prod x_j^{e_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    #[serde(rename = "c")]
    pub coefficient: f64,
    #[serde(rename = "e")]
    pub exponents: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolynomial {
    n: usize,
    terms: Vec<Term>,
}

/// Polynomial with strictly positive coefficients.
///
/// Terms are merged and kept in descending lexicographic order of exponent
/// vectors, so two polynomials are equal iff their term lists are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomial", into = "RawPolynomial")]
pub struct SparsePolynomial {
    n: usize,
    terms: Vec<Term>,
}

impl TryFrom<RawPolynomial> for SparsePolynomial {
    type Error = Error;

    fn try_from(raw: RawPolynomial) -> Result<Self> {
        SparsePolynomial::new(raw.n, raw.terms)
    }
}

impl From<SparsePolynomial> for RawPolynomial {
    fn from(p: SparsePolynomial) -> Self {
        RawPolynomial {
            n: p.n,
            terms: p.terms,
        }
    }
}

impl SparsePolynomial {
    /// Builds a canonical polynomial. Zero coefficients are dropped, repeated
    /// exponent vectors are merged, negative or non-finite coefficients are
    /// rejected.
    pub fn new(n: usize, terms: Vec<Term>) -> Result<Self> {
        let mut kept: Vec<Term> = Vec::with_capacity(terms.len());
        for (k, t) in terms.into_iter().enumerate() {
            if t.exponents.len() != n {
                return Err(Error::InvalidPolynomial(format!(
                    "term {k} has {} exponents, expected {n}",
                    t.exponents.len()
                )));
            }
            if !(t.coefficient.is_finite() && t.coefficient >= 0.0) {
                return Err(Error::InvalidPolynomial(format!(
                    "term {k} has coefficient {}, coefficients must be positive",
                    t.coefficient
                )));
            }
            if t.coefficient > 0.0 {
                kept.push(t);
            }
        }
        kept.sort_by(|a, b| b.exponents.cmp(&a.exponents));
        let mut terms: Vec<Term> = Vec::with_capacity(kept.len());
        for t in kept {
            match terms.last_mut() {
                Some(last) if last.exponents == t.exponents => last.coefficient += t.coefficient,
                _ => terms.push(t),
            }
        }
        Ok(SparsePolynomial { n, terms })
    }

    /// Convenience constructor from `(coefficient, exponents)` pairs.
    pub fn from_pairs(n: usize, pairs: &[(f64, &[u32])]) -> Result<Self> {
        let terms = pairs
            .iter()
            .map(|&(c, e)| Term {
                coefficient: c,
                exponents: e.to_vec(),
            })
            .collect();
        Self::new(n, terms)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum total degree, `None` for the empty polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.iter().map(|t| t.exponents.iter().sum()).max()
    }

    /// `Some(d)` if every term has total degree `d`.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let d = self.degree()?;
        self.terms
            .iter()
            .all(|t| t.exponents.iter().sum::<u32>() == d)
            .then_some(d)
    }

    /// Direct evaluation in linear domain. Overflows for large exponents;
    /// prefer [`KneeJerkExpr::eval_log`] after [`to_expression`](Self::to_expression).
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .zip(x)
                    .fold(t.coefficient, |acc, (&e, &xi)| acc * xi.powi(e as i32))
            })
            .sum()
    }

    /// Exact evaluation at non-negative integer points. `None` if a
    /// coefficient is not an integer or the result overflows `u128`.
    pub fn evaluate_exact(&self, x: &[u64]) -> Option<u128> {
        let mut total: u128 = 0;
        for t in &self.terms {
            if t.coefficient.fract() != 0.0 || t.coefficient > u64::MAX as f64 {
                return None;
            }
            let mut v = t.coefficient as u128;
            for (&e, &xi) in t.exponents.iter().zip(x) {
                v = v.checked_mul((xi as u128).checked_pow(e)?)?;
            }
            total = total.checked_add(v)?;
        }
        Some(total)
    }

    /// Expression tree with the same value on the open orthant.
    ///
    /// Unit coefficients and unit exponents are elided, single factors and
    /// single terms are not wrapped.
    pub fn to_expression(&self) -> Result<KneeJerkExpr> {
        if self.terms.is_empty() {
            return Err(Error::InvalidExpression {
                path: "root".into(),
                reason: "polynomial has no terms".into(),
            });
        }
        let mut summands: Vec<ExprSpec> = self.terms.iter().map(term_spec).collect();
        let spec = if summands.len() == 1 {
            summands.pop().unwrap()
        } else {
            ExprSpec::sum(summands)
        };
        KneeJerkExpr::new(self.n, spec)
    }
}

fn term_spec(t: &Term) -> ExprSpec {
    let mut factors = Vec::new();
    if t.coefficient != 1.0 {
        factors.push(ExprSpec::constant(t.coefficient));
    }
    for (j, &e) in t.exponents.iter().enumerate() {
        match e {
            0 => {}
            1 => factors.push(ExprSpec::var(j)),
            _ => factors.push(ExprSpec::pow(ExprSpec::var(j), e as f64)),
        }
    }
    match factors.len() {
        0 => ExprSpec::constant(1.0),
        1 => factors.pop().unwrap(),
        _ => ExprSpec::prod(factors),
    }
}

impl fmt::Display for SparsePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            let mut parts = Vec::new();
            if t.coefficient != 1.0 || t.exponents.iter().all(|&e| e == 0) {
                parts.push(format!("{}", t.coefficient));
            }
            for (j, &e) in t.exponents.iter().enumerate() {
                match e {
                    0 => {}
                    1 => parts.push(format!("x{j}")),
                    _ => parts.push(format!("x{j}^{e}")),
                }
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

/// `x^34 y^38 (1 + 2x)^125` on two coordinates.
pub fn dlr_example() -> KneeJerkExpr {
    let spec = ExprSpec::prod(vec![
        ExprSpec::pow(ExprSpec::var(0), 34.0),
        ExprSpec::pow(ExprSpec::var(1), 38.0),
        ExprSpec::pow(
            ExprSpec::sum(vec![
                ExprSpec::constant(1.0),
                ExprSpec::prod(vec![ExprSpec::constant(2.0), ExprSpec::var(0)]),
            ]),
            125.0,
        ),
    ]);
    KneeJerkExpr::new(2, spec).expect("static expression is valid")
}

/// `x_0 + ... + x_{n-1}`.
pub fn coordinate_sum(n: usize) -> KneeJerkExpr {
    let spec = if n == 1 {
        ExprSpec::var(0)
    } else {
        ExprSpec::sum((0..n).map(ExprSpec::var).collect())
    };
    KneeJerkExpr::new(n, spec).expect("static expression is valid")
}
