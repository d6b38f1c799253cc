mod common;

use std::sync::Arc;

use kneejerk::expr::{dlr_example, ExprSpec};
use kneejerk::mapping::{criticality_residual, iterate, knee_jerk_step, IterationConfig, TraceStatus};
use kneejerk::simplex::block_divergences;
use kneejerk::{BlockPoint, BlockStructure, KneeJerkExpr};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn random_polynomials_ascend_and_stay_feasible() {
    let mut r = rng(21);
    for _ in 0..10_000 {
        let n = r.random_range(1..=6);
        let p = common::random_polynomial(&mut r, n, 5);
        let e = p.to_expression().unwrap();
        let sizes = common::random_blocks(&mut r, n, 3);
        let weights = r.random_bool(0.5).then(|| (0..n).map(|_| r.random_range(0.5..2.0)).collect());
        let s = common::structure(&sizes, weights);
        let x = BlockPoint::random(s.clone(), &mut r);
        let step = knee_jerk_step(&e, &x).unwrap();
        let slack = 1e-12 * (1.0 + step.log_before.abs());
        assert!(step.log_after >= step.log_before - slack, "{p}: {step:?}");
        assert!(step.improvement() >= step.bound - 1e-9);
        for (i, range) in s.blocks().enumerate() {
            assert!(step.point.coords()[range].iter().all(|&v| v >= 0.0));
            let mass = s.weighted_mass(i, step.point.coords());
            assert!((mass - 1.0).abs() <= 1e-12, "block {i}: {mass}");
        }
    }
}

#[test]
fn bound_is_mass_weighted_sum_of_block_divergences() {
    let mut r = rng(22);
    for _ in 0..2000 {
        let n = r.random_range(2..=6);
        let e = common::random_polynomial(&mut r, n, 5).to_expression().unwrap();
        let sizes = common::random_blocks(&mut r, n, 3);
        let s = common::structure(&sizes, Some((0..n).map(|_| r.random_range(0.5..2.0)).collect()));
        let x = BlockPoint::random(s.clone(), &mut r);
        let step = knee_jerk_step(&e, &x).unwrap();
        let divs = block_divergences(step.point.coords(), x.coords(), &s).unwrap();
        let ev = e.eval_log(x.coords()).unwrap();
        let expected: f64 = s.blocks().zip(&divs).map(|(range, d)| ev.mass(range) * d).sum();
        assert!((step.bound - expected).abs() <= 1e-12 * (1.0 + expected), "{} vs {expected}", step.bound);
    }
}

#[test]
fn homogeneous_update_is_gradient_over_degree() {
    let mut r = rng(23);
    for _ in 0..1000 {
        let n = r.random_range(1..=6);
        let d = r.random_range(1..=5);
        let p = common::random_homogeneous(&mut r, n, d);
        let e = p.to_expression().unwrap();
        let s = Arc::new(BlockStructure::simplex(n).unwrap());
        let x = common::random_interior(&mut r, &s);
        let g = e.eval_log(x.coords()).unwrap().grad;
        let step = knee_jerk_step(&e, &x).unwrap();
        for (a, b) in step.point.coords().iter().zip(&g) {
            assert!((a - b / d as f64).abs() <= 1e-12);
        }
    }
}

#[test]
fn linear_domain_reference_agrees() {
    let mut r = rng(24);
    for _ in 0..2000 {
        let n = r.random_range(1..=6);
        let p = common::random_polynomial(&mut r, n, 5);
        let e = p.to_expression().unwrap();
        let sizes = common::random_blocks(&mut r, n, 3);
        let s = common::structure(&sizes, Some((0..n).map(|_| r.random_range(0.5..2.0)).collect()));
        let x = common::random_interior(&mut r, &s);
        let step = knee_jerk_step(&e, &x).unwrap();
        if step.any_degenerate() {
            continue;
        }
        let reference = common::reference_step(&p, x.coords(), &s);
        for (a, b) in step.point.coords().iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{p}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_coordinates_are_absorbing() {
    let mut r = rng(25);
    for _ in 0..500 {
        let n = r.random_range(2..=6);
        let e = common::random_polynomial(&mut r, n, 4).to_expression().unwrap();
        let s = Arc::new(BlockStructure::simplex(n).unwrap());
        let zero = r.random_range(0..n);
        let mut raw: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        raw[zero] = 0.0;
        let x = BlockPoint::normalize(&raw, s).unwrap();
        let step = knee_jerk_step(&e, &x).unwrap();
        if step.log_before.is_finite() && !step.any_degenerate() {
            assert_eq!(step.point.coords()[zero], 0.0);
            assert!(step.log_after >= step.log_before - 1e-12 * (1.0 + step.log_before.abs()));
        }
    }
}

#[test]
fn fixed_points_have_zero_divergence_and_residual() {
    // Symmetric polynomials are stationary at the barycenter.
    let e = KneeJerkExpr::new(
        3,
        ExprSpec::sum(vec![
            ExprSpec::prod(vec![ExprSpec::var(0), ExprSpec::var(1)]),
            ExprSpec::prod(vec![ExprSpec::var(1), ExprSpec::var(2)]),
            ExprSpec::prod(vec![ExprSpec::var(0), ExprSpec::var(2)]),
        ]),
    )
    .unwrap();
    let s = Arc::new(BlockStructure::simplex(3).unwrap());
    let bary = BlockPoint::barycenter(s.clone());
    let step = knee_jerk_step(&e, &bary).unwrap();
    assert!(step.divergence() < 1e-28);
    assert!(criticality_residual(&e, &bary).unwrap() < 1e-14);

    let moved = BlockPoint::new(vec![0.2, 0.3, 0.5], s).unwrap();
    assert!(knee_jerk_step(&e, &moved).unwrap().divergence() > 1e-6);
    assert!(criticality_residual(&e, &moved).unwrap() > 1e-3);
}

#[test]
fn converged_dlr_iterate_is_a_fixed_point() {
    let e = dlr_example();
    let s = Arc::new(BlockStructure::simplex(2).unwrap());
    let x0 = BlockPoint::new(vec![0.5, 0.5], s).unwrap();
    let cfg = IterationConfig {
        tol_div: 1e-20,
        ..IterationConfig::default()
    };
    let trace = iterate(&e, &x0, &cfg).unwrap();
    assert_eq!(trace.status, TraceStatus::Converged);
    assert!(trace.residual <= 1e-8);
    let again = knee_jerk_step(&e, &trace.point).unwrap();
    assert!(again.divergence() < 1e-18);
    assert!((trace.point.coords()[0] - common::dlr_root()).abs() <= 1e-8);
}

#[test]
fn trace_values_never_decrease() {
    let mut r = rng(27);
    for _ in 0..100 {
        let n = r.random_range(2..=5);
        let e = common::random_polynomial(&mut r, n, 5).to_expression().unwrap();
        let sizes = common::random_blocks(&mut r, n, 2);
        let s = common::structure(&sizes, None);
        let x0 = BlockPoint::random(s, &mut r);
        let cfg = IterationConfig {
            max_iters: 200,
            ..IterationConfig::default()
        };
        let trace = iterate(&e, &x0, &cfg).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].log_value >= w[0].log_value - 1e-12 * (1.0 + w[0].log_value.abs()));
        }
    }
}

proptest! {
    #[test]
    fn separable_product_steps_blockwise(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n1, n2) = (r.random_range(1..=3), r.random_range(1..=3));
        let p1 = common::random_polynomial(&mut r, n1, 4);
        let p2 = common::random_polynomial(&mut r, n2, 4);
        // Embed the second factor on variables n1..n1+n2.
        let shift = |spec: &ExprSpec| -> ExprSpec {
            let text = serde_json::to_string(spec).unwrap();
            let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
            fn walk(v: &mut serde_json::Value, by: u64) {
                match v {
                    serde_json::Value::Object(m) => {
                        if let Some(serde_json::Value::Number(i)) = m.get("index") {
                            let i = i.as_u64().unwrap() + by;
                            m.insert("index".into(), i.into());
                        }
                        for c in m.values_mut() {
                            walk(c, by);
                        }
                    }
                    serde_json::Value::Array(a) => a.iter_mut().for_each(|c| walk(c, by)),
                    _ => {}
                }
            }
            walk(&mut v, n1 as u64);
            serde_json::from_value(v).unwrap()
        };
        let e1 = p1.to_expression().unwrap();
        let e2 = p2.to_expression().unwrap();
        let joint = KneeJerkExpr::new(n1 + n2, ExprSpec::prod(vec![e1.spec().clone(), shift(e2.spec())])).unwrap();
        let s = common::structure(&[n1, n2], None);
        let x = common::random_interior(&mut r, &s);
        let step = knee_jerk_step(&joint, &x).unwrap();
        prop_assume!(!step.any_degenerate());
        let s1 = Arc::new(BlockStructure::simplex(n1).unwrap());
        let s2 = Arc::new(BlockStructure::simplex(n2).unwrap());
        let x1 = BlockPoint::new(x.coords()[..n1].to_vec(), s1).unwrap();
        let x2 = BlockPoint::new(x.coords()[n1..].to_vec(), s2).unwrap();
        let a = knee_jerk_step(&e1, &x1).unwrap();
        let b = knee_jerk_step(&e2, &x2).unwrap();
        let separate: Vec<f64> = a.point.coords().iter().chain(b.point.coords()).copied().collect();
        for (u, v) in step.point.coords().iter().zip(&separate) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }
}
