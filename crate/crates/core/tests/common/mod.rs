//! Generators and independent reference computations shared by the
//! integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use kneejerk::expr::{ExprSpec, Term};
use kneejerk::{BlockPoint, BlockStructure, Graph, KneeJerkExpr, SparsePolynomial};
use rand::Rng;

/// Random positive-coefficient polynomial in `n` variables, total degree <= `max_degree`.
pub fn random_polynomial<R: Rng>(rng: &mut R, n: usize, max_degree: u32) -> SparsePolynomial {
    let count = rng.random_range(1..=6);
    let terms = (0..count)
        .map(|_| {
            let degree = rng.random_range(0..=max_degree);
            let mut exponents = vec![0u32; n];
            for _ in 0..degree {
                exponents[rng.random_range(0..n)] += 1;
            }
            Term {
                coefficient: rng.random_range(0.1..10.0),
                exponents,
            }
        })
        .collect();
    SparsePolynomial::new(n, terms).unwrap()
}

/// Random homogeneous polynomial of degree `d >= 1`.
pub fn random_homogeneous<R: Rng>(rng: &mut R, n: usize, d: u32) -> SparsePolynomial {
    let count = rng.random_range(1..=6);
    let terms = (0..count)
        .map(|_| {
            let mut exponents = vec![0u32; n];
            for _ in 0..d {
                exponents[rng.random_range(0..n)] += 1;
            }
            Term {
                coefficient: rng.random_range(0.1..10.0),
                exponents,
            }
        })
        .collect();
    SparsePolynomial::new(n, terms).unwrap()
}

/// Random expression tree over `n` variables using every node kind.
pub fn random_spec<R: Rng>(rng: &mut R, n: usize, depth: u32) -> ExprSpec {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        return if rng.random_bool(0.8) {
            ExprSpec::var(rng.random_range(0..n))
        } else {
            ExprSpec::constant(rng.random_range(0.2..5.0))
        };
    }
    match rng.random_range(0..3) {
        0 => ExprSpec::sum((0..rng.random_range(1..=3)).map(|_| random_spec(rng, n, depth - 1)).collect()),
        1 => ExprSpec::prod((0..rng.random_range(1..=3)).map(|_| random_spec(rng, n, depth - 1)).collect()),
        _ => ExprSpec::pow(random_spec(rng, n, depth - 1), rng.random_range(0.3..3.0)),
    }
}

pub fn random_expr<R: Rng>(rng: &mut R, n: usize, depth: u32) -> KneeJerkExpr {
    KneeJerkExpr::new(n, random_spec(rng, n, depth)).unwrap()
}

/// Point with `u` uniform in `[lo, hi]^n`.
pub fn random_log_point<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi).exp()).collect()
}

pub fn structure(sizes: &[usize], weights: Option<Vec<f64>>) -> Arc<BlockStructure> {
    Arc::new(BlockStructure::new(sizes.to_vec(), weights).unwrap())
}

/// Random interior point built without the library sampler.
pub fn random_interior<R: Rng>(rng: &mut R, s: &Arc<BlockStructure>) -> BlockPoint {
    let raw: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(0.05..1.0)).collect();
    BlockPoint::normalize(&raw, s.clone()).unwrap()
}

/// Random block split of `n` coordinates into 1..=3 blocks.
pub fn random_blocks<R: Rng>(rng: &mut R, n: usize, max_blocks: usize) -> Vec<usize> {
    let k = rng.random_range(1..=max_blocks.min(n));
    let mut sizes = vec![1; k];
    for _ in 0..n - k {
        sizes[rng.random_range(0..k)] += 1;
    }
    sizes
}

/// `Z` and `x_j Z_{x_j}` in linear domain, straight from the term list.
pub fn naive_value_and_euler_terms(p: &SparsePolynomial, x: &[f64]) -> (f64, Vec<f64>) {
    let mut z = 0.0;
    let mut xdz = vec![0.0; x.len()];
    for t in p.terms() {
        let mono: f64 = t
            .exponents
            .iter()
            .zip(x)
            .fold(t.coefficient, |acc, (&e, &xi)| acc * xi.powi(e as i32));
        z += mono;
        for (j, &e) in t.exponents.iter().enumerate() {
            xdz[j] += e as f64 * mono;
        }
    }
    (z, xdz)
}

/// Update computed directly from the defining formula in linear domain:
/// `x'_ij = (x_ij Z_{x_ij} / a_ij) / sum_k x_ik Z_{x_ik}`.
pub fn reference_step(p: &SparsePolynomial, x: &[f64], s: &BlockStructure) -> Vec<f64> {
    let (_, xdz) = naive_value_and_euler_terms(p, x);
    let mut out = x.to_vec();
    for r in s.blocks() {
        let total: f64 = xdz[r.clone()].iter().sum();
        for j in r {
            out[j] = xdz[j] / s.weights()[j] / total;
        }
    }
    out
}

/// Connected simple graphs on `v` vertices, every edge subset of `K_v`.
pub fn all_connected_graphs(v: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..v).flat_map(|a| (a + 1..v).map(move |b| (a, b))).collect();
    (0u32..1 << pairs.len())
        .filter_map(|mask| {
            let edges = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            Graph::new(v, edges).ok()
        })
        .collect()
}

/// Random connected multigraph: random tree plus extra (possibly parallel) edges.
pub fn random_connected_graph<R: Rng>(rng: &mut R, max_vertices: usize, max_edges: usize) -> Graph {
    let v = rng.random_range(2..=max_vertices);
    let mut edges: Vec<(usize, usize)> = (1..v).map(|u| (rng.random_range(0..u), u)).collect();
    let extra = rng.random_range(0..=max_edges.saturating_sub(v - 1));
    for _ in 0..extra {
        let a = rng.random_range(0..v);
        let mut b = rng.random_range(0..v - 1);
        if b >= a {
            b += 1;
        }
        edges.push((a, b));
    }
    // Shuffle so the tree edges are not always first.
    for k in (1..edges.len()).rev() {
        edges.swap(k, rng.random_range(0..=k));
    }
    Graph::new(v, edges).unwrap()
}

/// Root of `394 x^2 - 246 x - 34` in (0, 1) by bisection.
pub fn dlr_root() -> f64 {
    let f = |x: f64| 394.0 * x * x - 246.0 * x - 34.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    while hi - lo > 1e-16 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
