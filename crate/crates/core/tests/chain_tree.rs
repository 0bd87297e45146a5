use approx::assert_abs_diff_eq;
use botlab_core::chain::{decay_parameters, ks_parameter, markov_decay_probe, validate_chain, TransitionChain};
use botlab_core::error::Error;
use botlab_core::tree::{build_dary, RootedTree};
use proptest::prelude::*;

#[test]
fn bsc_spectrum() {
    let c = TransitionChain::bsc(0.3).unwrap();
    assert_abs_diff_eq!(c.pi[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(c.lambda, 0.4, epsilon = 1e-12);
    assert!(c.ergodic);
    assert_abs_diff_eq!(ks_parameter(&c, 2), 0.32, epsilon = 1e-12);
    assert_abs_diff_eq!(ks_parameter(&TransitionChain::bsc(0.1).unwrap(), 2), 1.28, epsilon = 1e-12);
    assert_abs_diff_eq!(ks_parameter(&c, 1), 0.16, epsilon = 1e-12);
}

#[test]
fn rejects_bad_chains() {
    assert!(matches!(validate_chain(&[vec![1.0, 0.0], vec![0.0, 1.0]]), Err(Error::NotErgodic)));
    assert!(matches!(validate_chain(&[vec![0.0, 1.0], vec![1.0, 0.0]]), Err(Error::NotErgodic)));
    assert!(matches!(validate_chain(&[vec![0.5, 0.6], vec![0.5, 0.5]]), Err(Error::NonStochastic(_))));
    assert!(matches!(validate_chain(&[vec![1.2, -0.2], vec![0.5, 0.5]]), Err(Error::NonStochastic(_))));
    // zero entry but primitive
    assert!(validate_chain(&[vec![0.5, 0.5], vec![1.0, 0.0]]).is_ok());
}

#[test]
fn decay_parameters_bsc03() {
    let c = TransitionChain::bsc(0.3).unwrap();
    let p = decay_parameters(&c, 2, 1.0, 1.0).unwrap();
    // 30-digit values of ln(1/√0.4)/1.2, 0.4^(1.1/1.2), 0.4^(1.15/1.2)
    assert_abs_diff_eq!(p.eps, 0.381_787_804_947_564_6, epsilon = 1e-13);
    assert_abs_diff_eq!(p.lambda_eps, 0.431_739_375_225_510_4, epsilon = 1e-13);
    assert_abs_diff_eq!(p.lambda_tilde_eps, 0.415_566_781_745_370_2, epsilon = 1e-13);
    assert_abs_diff_eq!(p.kappa, 0.006_383_417_802_990_1, epsilon = 1e-13);
    // four-figure values quoted in the design notes
    assert_abs_diff_eq!(p.lambda_eps, 0.431_750, epsilon = 2e-5);
    assert_abs_diff_eq!(p.lambda_tilde_eps, 0.415_581, epsilon = 2e-5);
    assert_abs_diff_eq!(p.kappa, 0.006_382, epsilon = 2e-6);
    assert_eq!(p.h_diamond, 2);
    assert_eq!(p.m, 0);
    assert!(matches!(decay_parameters(&TransitionChain::bsc(0.1).unwrap(), 2, 1.0, 1.0), Err(Error::AboveThreshold(_))));
}

#[test]
fn markov_probe_bsc() {
    let c = TransitionChain::bsc(0.3).unwrap();
    assert_abs_diff_eq!(markov_decay_probe(&c, 0), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(markov_decay_probe(&c, 1), 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(markov_decay_probe(&c, 3), 0.064, epsilon = 1e-12);
}

/// Grid search over mean-zero f with |f| ≤ 1 for q = 3.
fn probe_by_grid(c: &TransitionChain, k: usize) -> f64 {
    let mk = c.power(k);
    let mut best = 0.0_f64;
    let n = 200;
    for i in 0..=n {
        for j in 0..=n {
            let f0 = -1.0 + 2.0 * i as f64 / n as f64;
            let f1 = -1.0 + 2.0 * j as f64 / n as f64;
            let f2 = -(c.pi[0] * f0 + c.pi[1] * f1) / c.pi[2];
            if f2.abs() > 1.0 {
                continue;
            }
            let f = [f0, f1, f2];
            for r in 0..3 {
                let v: f64 = (0..3).map(|s| mk[r * 3 + s] * f[s]).sum();
                best = best.max(v.abs());
            }
        }
    }
    best
}

#[test]
fn markov_probe_matches_grid() {
    let c = validate_chain(&[vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]]).unwrap();
    for k in 0..4 {
        let exact = markov_decay_probe(&c, k);
        let grid = probe_by_grid(&c, k);
        assert!(exact >= grid - 1e-12);
        assert!(exact - grid < 2e-2, "k={k}: {exact} vs {grid}");
    }
}

fn arb_chain(q: usize) -> impl Strategy<Value = TransitionChain> {
    prop::collection::vec(0.05f64..1.0, q * q).prop_map(move |raw| {
        let rows: Vec<Vec<f64>> = raw
            .chunks(q)
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        validate_chain(&rows).unwrap()
    })
}

proptest! {
    #[test]
    fn stationary_and_probe_monotone(c in arb_chain(3)) {
        let m = c.matrix();
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| c.pi[i] * m[(i, j)]).sum();
            prop_assert!((s - c.pi[j]).abs() <= 1e-10);
        }
        let mut prev = markov_decay_probe(&c, 0);
        for k in 1..6 {
            let cur = markov_decay_probe(&c, k);
            prop_assert!(cur <= prev + 1e-12);
            prev = cur;
        }
    }

    #[test]
    fn ks_invariant_under_relabeling(c in arb_chain(3), d in 1usize..5) {
        let p = c.permuted(&[2, 0, 1]).unwrap();
        prop_assert!((ks_parameter(&c, d) - ks_parameter(&p, d)).abs() <= 1e-9);
    }

    #[test]
    fn decay_parameter_invariants(delta in 0.2f64..0.5, d in 1usize..4) {
        let c = TransitionChain::bsc(delta).unwrap();
        prop_assume!(ks_parameter(&c, d) < 1.0 && c.lambda > 1e-3);
        let p = decay_parameters(&c, d, 1.0, 1.0).unwrap();
        let df = d as f64;
        let g = |x: f64| (df * x * x).max(x).sqrt();
        prop_assert!(((-1.2 * p.eps).exp() - g(c.lambda)).abs() <= 1e-12);
        prop_assert!(((-1.1 * p.eps).exp() - g(p.lambda_eps)).abs() <= 1e-12);
        prop_assert!(((-1.15 * p.eps).exp() - g(p.lambda_tilde_eps)).abs() <= 1e-12);
        prop_assert!(c.lambda < p.lambda_tilde_eps && p.lambda_tilde_eps < p.lambda_eps);
        prop_assert!(((1.0 + p.kappa).powi(6) * p.lambda_tilde_eps - p.lambda_eps).abs() <= 1e-12);
    }
}

fn t3() -> RootedTree {
    build_dary(2, 3).unwrap()
}

#[test]
fn dary_shapes() {
    let t = build_dary(2, 2).unwrap();
    assert_eq!(t.n, 7);
    assert_eq!(t.leaves, vec![3, 4, 5, 6]);
    let t = build_dary(3, 1).unwrap();
    assert_eq!(t.n, 4);
    assert_eq!(t.children[0], vec![1, 2, 3]);
    assert!(matches!(build_dary(2, 21), Err(Error::SizeLimit { .. })));
}

#[test]
fn degree_domination() {
    let t = build_dary(2, 4).unwrap();
    assert!(t.check_degree_dominated(2, 1.0));
    assert!(!t.check_degree_dominated(1, 1.0));
    assert!(build_dary(1, 5).unwrap().check_degree_dominated(1, 1.0));
}

#[test]
fn o_sets_and_descendants() {
    let t = t3();
    assert_eq!(t.o_set(3, -1).unwrap(), vec![7, 8]);
    assert_eq!(t.o_set(3, 0).unwrap(), vec![4]);
    assert_eq!(t.o_set(3, 1).unwrap(), vec![2]);
    assert!(matches!(t.o_set(3, 2), Err(Error::NoSuchAncestor(..))));
    assert_eq!(t.dm_set(0, 1).unwrap(), vec![1, 2]);
    assert_eq!(t.dm_set(0, 0).unwrap(), vec![0]);
    assert!(matches!(t.dm_set(7, 1), Err(Error::TooShallow(..))));
    assert_eq!(t.nearest_common_ancestor(3, 4), 1);
    assert_eq!(t.nearest_common_ancestor(3, 3), 3);
    assert_eq!(t.nearest_common_ancestor(7, 14), 0);
}

#[test]
fn pivots() {
    let t = build_dary(2, 2).unwrap();
    assert_eq!(t.pivot_vertex(&[3, 4], 0, 0).unwrap(), 1);
    assert_eq!(t.pivot_vertex(&[3], 0, 0).unwrap(), 0);
    assert_eq!(t.pivot_vertex(&[3, 5], 0, 0).unwrap(), 0);
    assert!(matches!(t.pivot_vertex(&[3, 4, 5], 0, 0), Err(Error::TooLarge(..))));
    assert!(matches!(t.pivot_vertex(&[5], 1, 0), Err(Error::NotBelow(1))));
}

#[test]
fn edge_list_reindexes_breadth_first() {
    // root 5 with children 2 then 0; each has one leaf
    let t = RootedTree::from_edges(5, &[[5, 2], [5, 0], [2, 1], [0, 3]], 5);
    assert!(t.is_err(), "vertex 4 is disconnected");
    let t = RootedTree::from_edges(5, &[[4, 2], [4, 0], [2, 1], [0, 3]], 4).unwrap();
    assert_eq!(t.original_id, vec![4, 2, 0, 1, 3]);
    assert_eq!(t.children[0], vec![1, 2]);
    assert_eq!(t.leaves, vec![3, 4]);
    // leaves at different depths are rejected
    assert!(RootedTree::from_edges(3, &[[0, 1], [1, 2]], 0).is_ok());
    assert!(RootedTree::from_edges(4, &[[0, 1], [1, 2], [0, 3]], 0).is_err());
}

proptest! {
    #[test]
    fn o_partition_and_pivot_properties(d in 1usize..4, depth in 1usize..5, seed in 0u64..1000) {
        let t = build_dary(d, depth).unwrap();
        let u = (seed as usize) % t.n;
        for k in 1..=(t.layer[u]) {
            let a = t.anc(u, k).unwrap();
            let mut leaves: Vec<usize> = t.leaves_under(u).to_vec();
            for w in t.o_range(u, 0, k as i64 - 1).unwrap() {
                leaves.extend(t.leaves_under(w));
            }
            leaves.sort_unstable();
            prop_assert_eq!(leaves, t.leaves_under(a).to_vec());
            for j in 0..k as i64 {
                let o = t.o_set(u, j).unwrap();
                prop_assert!(t.is_antichain(&o).is_ok());
                prop_assert!(o.iter().all(|&v| t.height[v] == t.height[u] + j as usize));
            }
        }
        for m in 0..=t.height[u] {
            let dm = t.dm_set(u, m).unwrap();
            let mut l: Vec<usize> = dm.iter().flat_map(|&v| t.leaves_under(v).to_vec()).collect();
            l.sort_unstable();
            prop_assert_eq!(l, t.leaves_under(u).to_vec());
        }
        // pivot post-condition for K = 0, |S| = 2
        let lv = t.leaves_under(0);
        if lv.len() >= 2 {
            let i = (seed as usize) % lv.len();
            let j = (seed as usize / 7 + 1 + i) % lv.len();
            if i != j {
                let mut s = vec![lv[i], lv[j]];
                s.sort_unstable();
                let p = t.pivot_vertex(&s, 0, 0).unwrap();
                for &c in &t.children[p] {
                    let cnt = s.iter().filter(|&&x| t.is_below(x, c)).count();
                    prop_assert!(cnt <= 1);
                }
                let here = s.iter().filter(|&&x| t.is_below(x, p)).count();
                prop_assert!(here > 1 || p == 0);
            }
        }
    }
}
