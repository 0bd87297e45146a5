mod common;

use approx::assert_abs_diff_eq;
use botlab_core::broadcast::Labeling;
use botlab_core::chain::{validate_chain, TransitionChain};
use botlab_core::error::Error;
use botlab_core::inference::{bp_posterior, census_estimator, census_polynomial, map_root, mc_correlation, RootPosterior};
use botlab_core::operators::{var_ratio, MomentEngine};
use botlab_core::tree::build_dary;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn obs(leaves: &[usize], states: &[usize]) -> Labeling {
    Labeling::from_pairs(leaves.iter().copied().zip(states.iter().copied()))
}

/// Posterior by summing the enumeration over all labelings consistent with
/// the observation.
fn enum_posterior(all: &[(Vec<usize>, f64)], leaves: &[usize], states: &[usize], q: usize) -> Vec<f64> {
    let mut post = vec![0.0; q];
    for (x, p) in all {
        if leaves.iter().zip(states).all(|(&l, &s)| x[l] == s) {
            post[x[0]] += p;
        }
    }
    let z: f64 = post.iter().sum();
    post.iter().map(|p| p / z).collect()
}

#[test]
fn bp_examples() {
    let c = TransitionChain::bsc(0.3).unwrap();
    let t = build_dary(2, 1).unwrap();
    let p = bp_posterior(&t, &c, &obs(&[1, 2], &[0, 0])).unwrap();
    assert_abs_diff_eq!(p.probs[0], 0.49 / 0.58, epsilon = 1e-14);
    assert_abs_diff_eq!(p.probs[0], 0.8448276, epsilon = 1e-7);
    assert_abs_diff_eq!(p.log_evidence, 0.29f64.ln(), epsilon = 1e-14);
    let p = bp_posterior(&t, &c, &obs(&[1, 2], &[0, 1])).unwrap();
    assert_abs_diff_eq!(p.probs[0], 0.5, epsilon = 1e-15);
    assert!(matches!(bp_posterior(&t, &c, &obs(&[1], &[0])), Err(Error::IncompleteObservation(_))));

    let t2 = build_dary(2, 2).unwrap();
    let all = common::enumerate(&t2, &c);
    let states = [0, 1, 1, 0];
    let p = bp_posterior(&t2, &c, &obs(&t2.leaves, &states)).unwrap();
    let want = enum_posterior(&all, &t2.leaves, &states, 2);
    assert_abs_diff_eq!(p.probs[0], want[0], epsilon = 1e-12);
}

#[test]
fn impossible_observation_is_an_error() {
    // no state reaches both 0 and 2 in one step
    let c = validate_chain(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.0]]).unwrap();
    let t = build_dary(2, 1).unwrap();
    assert!(matches!(bp_posterior(&t, &c, &obs(&[1, 2], &[0, 2])), Err(Error::ZeroLikelihood)));
    let p = bp_posterior(&t, &c, &obs(&[1, 2], &[0, 1])).unwrap();
    assert_abs_diff_eq!(p.probs[2], 1.0, epsilon = 1e-15);
}

#[test]
fn bp_matches_enumeration_on_all_small_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for tree in common::all_trees(8) {
        for q in [2, 3] {
            let c = common::random_chain(&mut rng, q, true);
            let all = common::enumerate(&tree, &c);
            let nl = tree.leaves.len();
            for idx in 0..q.pow(nl as u32) {
                let mut states = vec![0; nl];
                let mut r = idx;
                for s in states.iter_mut().rev() {
                    *s = r % q;
                    r /= q;
                }
                let evidence: f64 =
                    all.iter().filter(|(x, _)| tree.leaves.iter().zip(&states).all(|(&l, &s)| x[l] == s)).map(|(_, p)| p).sum();
                let got = bp_posterior(&tree, &c, &obs(&tree.leaves, &states));
                if evidence == 0.0 {
                    assert!(matches!(got, Err(Error::ZeroLikelihood)));
                    continue;
                }
                let got = got.unwrap();
                let want = enum_posterior(&all, &tree.leaves, &states, q);
                let tv: f64 = got.probs.iter().zip(&want).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
                assert!(tv <= 1e-12, "tv {tv}");
                assert_abs_diff_eq!(got.log_evidence, evidence.ln(), epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn map_examples() {
    let p = |v: &[f64]| RootPosterior { probs: v.to_vec(), log_evidence: 0.0 };
    assert_eq!(map_root(&p(&[0.84, 0.16])), 0);
    assert_eq!(map_root(&p(&[0.5, 0.5])), 0);
    assert_eq!(map_root(&p(&[0.1, 0.2, 0.7])), 2);
}

#[test]
fn census_examples() {
    let c = TransitionChain::bsc(0.3).unwrap();
    let t = build_dary(2, 1).unwrap();
    assert_abs_diff_eq!(census_estimator(&t, &c, &obs(&[1, 2], &[0, 0])).unwrap(), 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(census_estimator(&t, &c, &obs(&[1, 2], &[0, 1])).unwrap(), 0.0, epsilon = 1e-14);
}

#[test]
fn census_has_zero_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let c = common::random_chain(&mut rng, 3, false);
        let Ok((lam, _)) = c.second_eigenvector() else { continue };
        assert!(lam.abs() > 0.0);
        let t = build_dary(3, 3).unwrap();
        let f = census_polynomial(&t, &c).unwrap();
        let parts = MomentEngine::new(&t, &c).parts(&f).unwrap();
        assert!(parts.mean.abs() <= 1e-12, "{}", parts.mean);
    }
}

#[test]
fn complex_second_eigenvalue_is_reported() {
    // a rotation-like chain on three states
    let c = validate_chain(&[vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8], vec![0.8, 0.1, 0.1]]).unwrap();
    assert!(matches!(c.second_eigenvector(), Err(Error::ComplexEigenvector)));
    let t = build_dary(2, 1).unwrap();
    assert!(census_estimator(&t, &c, &obs(&[1, 2], &[0, 0])).is_err());
}

#[test]
fn mc_correlation_examples() {
    let t = build_dary(2, 8).unwrap();
    let c = TransitionChain::bsc(0.3).unwrap();
    let (r, se) = mc_correlation(&t, &c, &|_| 1.0, 1000, 1).unwrap();
    assert_eq!(r, 0.0);
    assert!(se > 0.0);

    // below KS: exact correlation is √var_ratio
    let f = census_polynomial(&t, &c).unwrap();
    let exact = var_ratio(&t, &c, &f).unwrap().sqrt();
    let leaves = t.leaves.clone();
    let census = move |x: &[usize]| leaves.iter().map(|&l| if x[l] == 0 { 1.0 } else { -1.0 }).sum::<f64>();
    let (r, se) = mc_correlation(&t, &c, &census, 20_000, 3).unwrap();
    assert!((r - exact).abs() <= 4.0 * se + 1e-3, "r {r} exact {exact} se {se}");
    let again = mc_correlation(&t, &c, &census, 20_000, 3).unwrap();
    assert_eq!((r, se), again);

    // above KS the correlation stays large
    let c = TransitionChain::bsc(0.1).unwrap();
    let f = census_polynomial(&t, &c).unwrap();
    let exact = var_ratio(&t, &c, &f).unwrap().sqrt();
    let (r, se) = mc_correlation(&t, &c, &census, 100_000, 4).unwrap();
    assert!(r >= 0.3 && se <= 0.01);
    assert!((r - exact).abs() <= 4.0 * se, "r {r} exact {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn posterior_is_equivariant(seed in 0u64..1000, obs_idx in 0usize..81) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = common::random_chain(&mut rng, 3, false);
        let perm = [2usize, 0, 1];
        let cp = c.permuted(&perm).unwrap();
        let t = build_dary(2, 2).unwrap();
        let states: Vec<usize> = (0..4).map(|i| (obs_idx / 3usize.pow(i)) % 3).collect();
        // new state i is old state perm[i]
        let mut inv = [0usize; 3];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let pstates: Vec<usize> = states.iter().map(|&s| inv[s]).collect();
        let a = bp_posterior(&t, &c, &obs(&t.leaves, &states)).unwrap();
        let b = bp_posterior(&t, &cp, &obs(&t.leaves, &pstates)).unwrap();
        for s in 0..3 {
            prop_assert!((a.probs[s] - b.probs[inv[s]]).abs() < 1e-12);
        }
        prop_assert!((a.log_evidence - b.log_evidence).abs() < 1e-10);
    }
}
