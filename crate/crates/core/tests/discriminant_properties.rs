mod common;

use kneejerk::diagnostics::{check_log_concavity, check_log_log_convexity};
use kneejerk::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Spanning-tree weight sum by trying every (V-1)-subset of edges.
fn brute_force(g: &Graph, w: &[u64]) -> u128 {
    let (v, e) = (g.vertices(), g.num_edges());
    let mut total = 0u128;
    for mask in 0u32..1 << e {
        if mask.count_ones() as usize != v - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..v).collect();
        fn find(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                a = p[a];
            }
            a
        }
        let mut acyclic = true;
        let mut product = 1u128;
        for (k, &(a, b)) in g.edges().iter().enumerate() {
            if mask >> k & 1 == 1 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra == rb {
                    acyclic = false;
                    break;
                }
                parent[ra] = rb;
                product *= w[k] as u128;
            }
        }
        if acyclic {
            total += product;
        }
    }
    total
}

fn check_graph(g: &Graph, rng: &mut ChaCha8Rng) {
    let poly = g.discriminant_polynomial().unwrap();
    assert_eq!(poly.homogeneous_degree(), Some(g.vertices() as u32 - 1));
    assert!(poly.terms().iter().all(|t| t.exponents.iter().all(|&e| e <= 1)));
    for _ in 0..3 {
        let w: Vec<u64> = (0..g.num_edges()).map(|_| rng.random_range(1..=7)).collect();
        let exact = g.eval_matrix_tree_exact(&w).unwrap();
        assert_eq!(poly.evaluate_exact(&w), Some(exact), "{g:?} at {w:?}");
        assert_eq!(brute_force(g, &w), exact, "{g:?} at {w:?}");
        let wf: Vec<f64> = w.iter().map(|&v| v as f64).collect();
        let det = g.eval_matrix_tree(&wf).unwrap();
        assert!((det - exact as f64).abs() <= 1e-10 * exact as f64);
    }
    let w: Vec<f64> = (0..g.num_edges()).map(|_| rng.random_range(0.1f64..10.0)).collect();
    let value = poly.evaluate(&w);
    assert!((g.eval_matrix_tree(&w).unwrap() - value).abs() <= 1e-10 * value);
    assert!((g.log_eval_matrix_tree(&w).unwrap() - value.ln()).abs() <= 1e-10 * (1.0 + value.ln().abs()));
    let e = poly.to_expression().unwrap();
    let ev = e.eval_log(&w).unwrap();
    assert!((ev.log_value - value.ln()).abs() <= 1e-12 * (1.0 + value.ln().abs()));
    let mass: f64 = ev.grad.iter().sum();
    assert!((mass - (g.vertices() - 1) as f64).abs() <= 1e-10 * g.vertices() as f64);
}

#[test]
fn every_small_connected_graph_matches() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let mut count = 0;
    for v in 2..=4 {
        for g in common::all_connected_graphs(v) {
            check_graph(&g, &mut r);
            count += 1;
        }
    }
    // 1 + 4 + 38 labeled connected graphs on 2, 3, 4 vertices.
    assert_eq!(count, 43);
}

#[test]
fn random_multigraphs_match() {
    let mut r = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..250 {
        let g = common::random_connected_graph(&mut r, 6, 12);
        check_graph(&g, &mut r);
    }
}

#[test]
fn discriminants_pass_both_curvature_probes() {
    let mut r = ChaCha8Rng::seed_from_u64(33);
    let mut fixtures = vec![
        Graph::complete(3).unwrap(),
        Graph::complete(4).unwrap(),
        Graph::cycle(5).unwrap(),
        Graph::path(4).unwrap(),
        Graph::new(3, vec![(0, 1), (0, 1), (1, 2), (0, 2)]).unwrap(),
    ];
    fixtures.extend((0..5).map(|_| common::random_connected_graph(&mut r, 5, 8)));
    for g in &fixtures {
        let e = g.discriminant_polynomial().unwrap().to_expression().unwrap();
        assert_eq!(e.dim(), g.num_edges());
        let convex = check_log_log_convexity(&e, 100, (-3.0, 3.0), &mut r).unwrap();
        assert!(convex.pass, "{g:?}: {convex:?}");
        let concave = check_log_concavity(&e, 100, (0.05, 2.0), &mut r).unwrap();
        assert!(concave.pass, "{g:?}: {concave:?}");
    }
}

#[test]
fn enumeration_limit_is_enforced_but_matrix_tree_is_not() {
    let k8 = Graph::complete(8).unwrap();
    assert!(k8.discriminant_polynomial().is_err());
    let ones = vec![1u64; k8.num_edges()];
    assert_eq!(k8.eval_matrix_tree_exact(&ones).unwrap(), 8u128.pow(6));
}
