mod common;

use approx::assert_abs_diff_eq;
use botlab_core::chain::TransitionChain;
use botlab_core::error::Error;
use botlab_core::functions::{EsPolynomial, LocalFunction};
use botlab_core::inference::census_polynomial;
use botlab_core::operators::{random_polynomial, var_ratio, MomentEngine};
use botlab_core::tree::build_dary;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `Var[E[f|X_ρ]] / Var[f]` by summing over every labeling.
fn enum_ratio(all: &[(Vec<usize>, f64)], f: &EsPolynomial, q: usize) -> f64 {
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut by_root = vec![(0.0, 0.0); q];
    for (x, p) in all {
        let v = f.eval(|u| x[u]);
        mean += p * v;
        second += p * v * v;
        by_root[x[0]].0 += p * v;
        by_root[x[0]].1 += p;
    }
    let cond2: f64 = by_root.iter().filter(|r| r.1 > 0.0).map(|(s, w)| s * s / w).sum();
    (cond2 - mean * mean) / (second - mean * mean)
}

#[test]
fn census_examples() {
    let t = build_dary(2, 1).unwrap();
    let f = EsPolynomial::linear(2, &t.leaves, &[1.0, -1.0]);
    let r = var_ratio(&t, &TransitionChain::bsc(0.3).unwrap(), &f).unwrap();
    assert_abs_diff_eq!(r, 2.0 * 0.16 / 1.16, epsilon = 1e-14);
    assert_abs_diff_eq!(r, 0.2758621, epsilon = 1e-7);
    let r = var_ratio(&t, &TransitionChain::bsc(0.1).unwrap(), &f).unwrap();
    assert_abs_diff_eq!(r, 0.7804878, epsilon = 1e-7);
    assert!(matches!(var_ratio(&t, &TransitionChain::bsc(0.3).unwrap(), &EsPolynomial::constant(2, 3.0)), Err(Error::ZeroVariance)));
}

/// Census on a d-ary tree of depth ℓ: `Var E[f|ρ] = d^{2ℓ} λ^{2ℓ}` and
/// `Var f = d^ℓ (1 + Σ_{j=1}^ℓ (d−1) d^{j−1} λ^{2j})`.
fn census_closed_form(d: usize, depth: usize, lam: f64) -> f64 {
    let (d, l) = (d as f64, depth as i32);
    let cond = d.powi(2 * l) * lam.powi(2 * l);
    let mut pairs = 1.0;
    for j in 1..=l {
        pairs += (d - 1.0) * d.powi(j - 1) * lam.powi(2 * j);
    }
    cond / (d.powi(l) * pairs)
}

#[test]
fn census_matches_closed_form() {
    for (delta, d, depth) in [(0.3, 2, 6), (0.1, 2, 8), (0.2, 3, 4), (0.45, 2, 10)] {
        let c = TransitionChain::bsc(delta).unwrap();
        let t = build_dary(d, depth).unwrap();
        let f = census_polynomial(&t, &c).unwrap();
        let got = var_ratio(&t, &c, &f).unwrap();
        let want = census_closed_form(d, depth, 1.0 - 2.0 * delta);
        assert!((got - want).abs() <= 1e-12 * want.max(1e-3), "{got} vs {want}");
    }
}

#[test]
fn var_ratio_matches_enumeration_on_small_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for tree in common::all_trees(7) {
        for q in [2, 3] {
            let c = common::random_chain(&mut rng, q, true);
            let all = common::enumerate(&tree, &c);
            for deg in 1..=3 {
                let f = random_polynomial(&mut rng, q, &tree.leaves, deg, 4);
                let want = enum_ratio(&all, &f, q);
                match var_ratio(&tree, &c, &f) {
                    Ok(got) => assert!((got - want).abs() <= 1e-10, "{got} vs {want}"),
                    Err(Error::ZeroVariance) => assert!(!want.is_finite() || want.abs() < 1e-6 || f.support().is_empty()),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}

#[test]
fn internal_vertices_are_allowed() {
    // terms may read internal vertices too
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = build_dary(2, 2).unwrap();
    let c = common::random_chain(&mut rng, 3, false);
    let all = common::enumerate(&t, &c);
    let f = random_polynomial(&mut rng, 3, &[1, 2, 4, 6], 2, 5);
    let got = var_ratio(&t, &c, &f).unwrap();
    assert!((got - enum_ratio(&all, &f, 3)).abs() <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn ratio_is_a_probability_and_scale_free(seed in 0u64..10_000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = build_dary(2, 3).unwrap();
        let c = common::random_chain(&mut rng, 2, false);
        let f = random_polynomial(&mut rng, 2, &t.leaves, 2, 5);
        let engine = MomentEngine::new(&t, &c);
        let Ok(parts) = engine.parts(&f) else { return Ok(()) };
        prop_assume!(parts.var_total > 1e-8);
        let r = parts.ratio();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!(parts.var_cond <= parts.var_total * (1.0 + 1e-12));
        let g = f.scale(a).add(&EsPolynomial::constant(2, b));
        let rg = var_ratio(&t, &c, &g).unwrap();
        prop_assert!((r - rg).abs() <= 1e-10);
    }
}

#[test]
fn constants_and_large_means_are_handled_exactly() {
    let tree = build_dary(2, 3).unwrap();
    let chain = TransitionChain::bsc(0.3).unwrap();
    let constants = EsPolynomial::new(
        2,
        vec![LocalFunction::new(2, vec![], vec![0.49]).unwrap(), LocalFunction::new(2, vec![], vec![-0.72]).unwrap()],
    );
    assert!(matches!(var_ratio(&tree, &chain, &constants), Err(Error::ZeroVariance)));
    // shifting by a huge constant must not change the ratio
    let x = LocalFunction::new(2, vec![7], vec![1.0, -1.0]).unwrap();
    let base = EsPolynomial::new(2, vec![x.clone()]);
    let shifted = EsPolynomial::new(2, vec![x, LocalFunction::new(2, vec![], vec![1e8]).unwrap()]);
    let a = var_ratio(&tree, &chain, &base).unwrap();
    let b = var_ratio(&tree, &chain, &shifted).unwrap();
    assert!((a - 0.4f64.powi(6)).abs() < 1e-15);
    assert!((a - b).abs() < 1e-15, "{a} {b}");
}
