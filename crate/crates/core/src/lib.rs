//! Monotone multiplicative ascent for log-log-convex ("knee-jerk") objectives.
//!
//! A knee-jerk function `Z` is positive on the open orthant, non-decreasing in
//! every coordinate, and log-log-convex: `W(u) = log Z(exp(u))` is convex. For
//! such functions the multiplicative update
//!
//! ```text
//! x'_j = x_j Z_{x_j} / sum_k x_k Z_{x_k}
//! ```
//!
//! maps the simplex into its closure and never decreases `Z`. This crate
//! provides
//!
//! - [`expr`]: expression trees closed under sums, products, positive scalars
//!   and positive powers, evaluated in log domain together with the
//!   u-gradient `g_j = x_j Z_{x_j} / Z`;
//! - [`simplex`]: products of (weighted) simplices and the I-divergence;
//! - [`mapping`]: the update step and an iteration driver with traces;
//! - [`diagnostics`]: runtime certificates (tangent bound, step inequality,
//!   argmax property, convexity and concavity probes);
//! - [`discriminant`]: spanning-tree polynomials of graphs, computed both by
//!   enumeration and by the weighted matrix-tree theorem;
//! - [`cli`]: problem files and the batch commands behind the `kneejerk` binary.

pub mod cli;
pub mod diagnostics;
pub mod discriminant;
pub mod expr;
pub mod mapping;
pub mod simplex;

pub use diagnostics::{ConvexityReport, InequalityReport};
pub use discriminant::Graph;
pub use expr::{ExprSpec, KneeJerkExpr, LogEval, LogObjective, SparsePolynomial};
pub use mapping::{IterationConfig, StepResult, Trace, TraceStatus};
pub use simplex::{BlockPoint, BlockStructure};

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid expression at {path}: {reason}")]
    InvalidExpression { path: String, reason: String },

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("coordinate {index} = {value} is outside the open orthant")]
    Domain { index: usize, value: f64 },

    #[error("evaluation produced NaN at {path}")]
    NotANumber { path: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid block structure: {0}")]
    InvalidStructure(String),

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("point is on the boundary: coordinate {index} is zero")]
    Boundary { index: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has {edges} edges; enumeration is limited to {limit}, use the matrix-tree evaluation instead")]
    EnumerationLimit { edges: usize, limit: usize },

    #[error("integer overflow in exact determinant")]
    Overflow,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("problem file: {0}")]
    Problem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
