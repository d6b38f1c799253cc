//! Graph discriminants (spanning-tree polynomials).
//!
//! Each edge of a connected multigraph is a variable; the discriminant sums,
//! over all spanning trees, the product of the tree's edge variables. It is
//! computed two independent ways: explicit enumeration of spanning trees and
//! the weighted matrix-tree theorem.

use serde::{Deserialize, Serialize};

use crate::expr::{SparsePolynomial, Term};
use crate::{Error, Result};

/// Largest edge count accepted by [`Graph::enumerate_spanning_trees`].
pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    vertices: usize,
    edges: Vec<[usize; 2]>,
}

/// Connected multigraph without self-loops. Edge `k` is variable `x_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct Graph {
    vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<RawGraph> for Graph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        Graph::new(raw.vertices, raw.edges.into_iter().map(|[u, v]| (u, v)).collect())
    }
}

impl From<Graph> for RawGraph {
    fn from(g: Graph) -> Self {
        RawGraph {
            vertices: g.vertices,
            edges: g.edges.into_iter().map(|(u, v)| [u, v]).collect(),
        }
    }
}

/// Union-find with an undo log, for backtracking.
struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
    history: Vec<Option<usize>>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            size: vec![1; n],
            history: Vec::new(),
        }
    }

    fn find(&self, mut v: usize) -> usize {
        while self.parent[v] != v {
            v = self.parent[v];
        }
        v
    }

    /// Returns `false` (and records a no-op) if already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            self.history.push(None);
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.history.push(Some(rb));
        true
    }

    fn undo(&mut self) {
        if let Some(Some(rb)) = self.history.pop() {
            let ra = self.parent[rb];
            self.size[ra] -= self.size[rb];
            self.parent[rb] = rb;
        }
    }
}

impl Graph {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if vertices < 2 {
            return Err(Error::InvalidGraph(format!(
                "vertices: need at least 2, got {vertices}"
            )));
        }
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= vertices || v >= vertices {
                return Err(Error::InvalidGraph(format!(
                    "edges[{k}]: endpoint out of range for {vertices} vertices"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("edges[{k}]: self-loop at vertex {u}")));
            }
        }
        let mut dsu = Dsu::new(vertices);
        let joined = edges.iter().filter(|&&(u, v)| dsu.union(u, v)).count();
        if joined != vertices - 1 {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(Graph { vertices, edges })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::new(n, edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        Self::new(n, (0..n).map(|u| (u, (u + 1) % n)).collect())
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (0..n.saturating_sub(1)).map(|u| (u, u + 1)).collect())
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// All spanning trees as sorted edge-index lists, in lexicographic order.
    pub fn enumerate_spanning_trees(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_edges() > ENUMERATION_LIMIT {
            return Err(Error::EnumerationLimit {
                edges: self.num_edges(),
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut out = Vec::new();
        let mut chosen = Vec::with_capacity(self.vertices - 1);
        let mut dsu = Dsu::new(self.vertices);
        self.extend_forest(0, &mut chosen, &mut dsu, &mut out);
        Ok(out)
    }

    fn extend_forest(&self, next: usize, chosen: &mut Vec<usize>, dsu: &mut Dsu, out: &mut Vec<Vec<usize>>) {
        let need = self.vertices - 1 - chosen.len();
        if need == 0 {
            out.push(chosen.clone());
            return;
        }
        if self.num_edges() - next < need {
            return;
        }
        for k in next..=self.num_edges() - need {
            let (u, v) = self.edges[k];
            if dsu.union(u, v) {
                chosen.push(k);
                self.extend_forest(k + 1, chosen, dsu, out);
                chosen.pop();
            }
            dsu.undo();
        }
    }

    /// Homogeneous polynomial of degree `V - 1` in `E` variables.
    pub fn discriminant_polynomial(&self) -> Result<SparsePolynomial> {
        let terms = self
            .enumerate_spanning_trees()?
            .into_iter()
            .map(|tree| {
                let mut exponents = vec![0; self.num_edges()];
                for k in tree {
                    exponents[k] += 1;
                }
                Term {
                    coefficient: 1.0,
                    exponents,
                }
            })
            .collect();
        SparsePolynomial::new(self.num_edges(), terms)
    }

    fn check_weights(&self, len: usize) -> Result<()> {
        if len != self.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: self.num_edges(),
                got: len,
            });
        }
        Ok(())
    }

    /// Weighted Laplacian with the last row and column removed.
    fn reduced_laplacian<T>(&self, w: &[T]) -> Vec<Vec<T>>
    where
        T: Copy + Default + std::ops::AddAssign + std::ops::SubAssign,
    {
        let n = self.vertices - 1;
        let mut m = vec![vec![T::default(); n]; n];
        for (&(u, v), &wk) in self.edges.iter().zip(w) {
            if u < n {
                m[u][u] += wk;
            }
            if v < n {
                m[v][v] += wk;
            }
            if u < n && v < n {
                m[u][v] -= wk;
                m[v][u] -= wk;
            }
        }
        m
    }

    /// Discriminant value via the matrix-tree theorem (LU with partial pivoting).
    pub fn eval_matrix_tree(&self, w: &[f64]) -> Result<f64> {
        Ok(self.matrix_tree_pivots(w)?.iter().product())
    }

    /// `log D_G(w)`; does not overflow for large graphs.
    pub fn log_eval_matrix_tree(&self, w: &[f64]) -> Result<f64> {
        let (sign, log_abs) = self.matrix_tree_log_det(w)?;
        if sign <= 0.0 {
            return Err(Error::InvalidGraph("reduced Laplacian is not positive definite".into()));
        }
        Ok(log_abs)
    }

    fn matrix_tree_log_det(&self, w: &[f64]) -> Result<(f64, f64)> {
        let pivots = self.matrix_tree_pivots(w)?;
        let sign = pivots.iter().map(|p| p.signum()).product();
        Ok((sign, pivots.iter().map(|p| p.abs().ln()).sum()))
    }

    fn matrix_tree_pivots(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_weights(w.len())?;
        if let Some(k) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Domain { index: k, value: w[k] });
        }
        Ok(lu_pivots(self.reduced_laplacian(w)))
    }

    /// Exact discriminant value at non-negative integer weights
    /// (fraction-free Bareiss elimination).
    pub fn eval_matrix_tree_exact(&self, w: &[u64]) -> Result<u128> {
        self.check_weights(w.len())?;
        let wide: Vec<i128> = w.iter().map(|&v| v as i128).collect();
        let det = bareiss_det(self.reduced_laplacian(&wide))?;
        u128::try_from(det).map_err(|_| Error::InvalidGraph("negative tree count".into()))
    }
}

/// Signed pivots of Gaussian elimination with partial pivoting; their
/// product is the determinant. Row swaps are folded into the first pivot's sign.
fn lu_pivots(mut m: Vec<Vec<f64>>) -> Vec<f64> {
    let n = m.len();
    let mut pivots = Vec::with_capacity(n);
    let mut sign = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))
            .unwrap();
        if p != k {
            m.swap(p, k);
            sign = -sign;
        }
        let pivot = m[k][k];
        pivots.push(pivot);
        if pivot == 0.0 {
            return pivots;
        }
        for i in k + 1..n {
            let factor = m[i][k] / pivot;
            if factor != 0.0 {
                let (upper, lower) = m.split_at_mut(i);
                for (a, b) in lower[0][k + 1..].iter_mut().zip(&upper[k][k + 1..]) {
                    *a -= factor * b;
                }
            }
        }
    }
    pivots[0] *= sign;
    pivots
}

fn bareiss_det(mut m: Vec<Vec<i128>>) -> Result<i128> {
    let n = m.len();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&i| m[i][k] != 0) {
                Some(i) => {
                    m.swap(i, k);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let a = m[i][j].checked_mul(m[k][k]).ok_or(Error::Overflow)?;
                let b = m[i][k].checked_mul(m[k][j]).ok_or(Error::Overflow)?;
                m[i][j] = a.checked_sub(b).ok_or(Error::Overflow)? / prev;
            }
        }
        prev = m[k][k];
    }
    Ok(sign * m[n - 1][n - 1])
}
