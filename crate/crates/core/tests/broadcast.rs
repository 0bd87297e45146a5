mod common;

use approx::assert_abs_diff_eq;
use botlab_core::broadcast::{
    joint_probability, pair_joint, sample_batch, sample_labeling, steiner_marginal, write_samples_csv, Labeling, RootInit,
};
use botlab_core::chain::TransitionChain;
use botlab_core::tree::build_dary;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn joint_probability_examples() {
    let c = TransitionChain::bsc(0.3).unwrap();
    let t = build_dary(2, 1).unwrap();
    let zeros = Labeling::full(&[0, 0, 0]);
    assert_abs_diff_eq!(joint_probability(&t, &c, &zeros, RootInit::Stationary).unwrap(), 0.245, epsilon = 1e-15);
    assert_abs_diff_eq!(joint_probability(&t, &c, &zeros, RootInit::Fixed(0)).unwrap(), 0.49, epsilon = 1e-15);
    let t0 = build_dary(2, 0).unwrap();
    assert_abs_diff_eq!(joint_probability(&t0, &c, &Labeling::full(&[1]), RootInit::Stationary).unwrap(), 0.5, epsilon = 1e-15);
    assert!(joint_probability(&t, &c, &Labeling::full(&[0, 0]), RootInit::Stationary).is_err());
}

#[test]
fn steiner_examples() {
    let c = TransitionChain::bsc(0.3).unwrap();
    let t = build_dary(2, 2).unwrap();
    let p = steiner_marginal(&t, &c, &[3], Some((0, 0)), RootInit::Stationary).unwrap();
    assert_abs_diff_eq!(p[0], 0.58, epsilon = 1e-12);
    let p = steiner_marginal(&t, &c, &[3, 4], Some((1, 0)), RootInit::Stationary).unwrap();
    assert_abs_diff_eq!(p[0], 0.49, epsilon = 1e-12);
    assert_abs_diff_eq!(p[3], 0.09, epsilon = 1e-12);
}

#[test]
fn steiner_matches_enumeration_on_small_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for tree in common::all_trees(7) {
        for q in [2, 3] {
            if q == 3 && tree.n > 6 {
                continue;
            }
            let c = common::random_chain(&mut rng, q, true);
            let all = common::enumerate(&tree, &c);
            // all pairs and the full leaf set, plus a conditioned case
            let mut sets: Vec<Vec<usize>> = vec![tree.leaves.clone()];
            for a in 0..tree.n {
                for b in a + 1..tree.n {
                    sets.push(vec![a, b]);
                }
            }
            for s in &sets {
                let got = steiner_marginal(&tree, &c, s, None, RootInit::Stationary).unwrap();
                let mut want = vec![0.0; got.len()];
                for (x, p) in &all {
                    let idx = s.iter().fold(0, |acc, &v| acc * q + x[v]);
                    want[idx] += p;
                }
                for (g, w) in got.iter().zip(&want) {
                    assert_abs_diff_eq!(g, w, epsilon = 1e-12);
                }
                assert_abs_diff_eq!(got.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                if s.len() == 2 {
                    let pj = pair_joint(&tree, &c, s[0], s[1]);
                    for (g, w) in pj.iter().zip(&want) {
                        assert_abs_diff_eq!(g, w, epsilon = 1e-12);
                    }
                }
            }
            // condition on the last vertex being in state 0 (if possible)
            let w = tree.n - 1;
            let pw: f64 = all.iter().filter(|(x, _)| x[w] == 0).map(|(_, p)| p).sum();
            if pw > 0.0 {
                let s = tree.leaves.clone();
                let got = steiner_marginal(&tree, &c, &s, Some((w, 0)), RootInit::Stationary).unwrap();
                let mut want = vec![0.0; got.len()];
                for (x, p) in all.iter().filter(|(x, _)| x[w] == 0) {
                    let idx = s.iter().fold(0, |acc, &v| acc * q + x[v]);
                    want[idx] += p / pw;
                }
                for (g, w) in got.iter().zip(&want) {
                    assert_abs_diff_eq!(g, w, epsilon = 1e-12);
                }
            }
        }
    }
}

#[test]
fn markov_property_on_small_trees() {
    // P(A, C | B) = P(A | B) P(C | B) for B separating A from C.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = build_dary(2, 2).unwrap();
    let c = common::random_chain(&mut rng, 3, false);
    for s in 0..3 {
        let joint = steiner_marginal(&t, &c, &[3, 5], Some((0, s)), RootInit::Stationary).unwrap();
        let a = steiner_marginal(&t, &c, &[3], Some((0, s)), RootInit::Stationary).unwrap();
        let b = steiner_marginal(&t, &c, &[5], Some((0, s)), RootInit::Stationary).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_abs_diff_eq!(joint[x * 3 + y], a[x] * b[y], epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn sampling_is_deterministic_and_calibrated() {
    let c = TransitionChain::bsc(0.3).unwrap();
    let t = build_dary(2, 3).unwrap();
    let a = sample_labeling(&t, &c, RootInit::Stationary, 42).unwrap();
    let b = sample_labeling(&t, &c, RootInit::Stationary, 42).unwrap();
    assert_eq!(a, b);

    let t1 = build_dary(2, 1).unwrap();
    let n = 100_000;
    let s = sample_batch(&t1, &c, RootInit::Fixed(0), 9, n).unwrap();
    let freq = s.iter().filter(|x| x[1] == 0).count() as f64 / n as f64;
    let sigma = (0.7 * 0.3 / n as f64).sqrt();
    assert!((freq - 0.7).abs() <= 3.0 * sigma, "freq {freq}");

    // root frequencies against π for a skewed chain (chi-square, 1 dof)
    let skew = botlab_core::chain::validate_chain(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
    let t0 = build_dary(2, 0).unwrap();
    let s = sample_batch(&t0, &skew, RootInit::Stationary, 3, n).unwrap();
    let k = s.iter().filter(|x| x[0] == 0).count() as f64;
    let e0 = skew.pi[0] * n as f64;
    let e1 = skew.pi[1] * n as f64;
    let chi2 = (k - e0).powi(2) / e0 + ((n as f64 - k) - e1).powi(2) / e1;
    assert!(chi2 < 10.83, "chi2 = {chi2}"); // p > 0.001

    // batches are independent of thread scheduling
    let again = sample_batch(&t0, &skew, RootInit::Stationary, 3, n).unwrap();
    assert_eq!(s, again);
}

#[test]
fn event_frequencies_within_four_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let c = common::random_chain(&mut rng, 3, false);
    let t = build_dary(2, 2).unwrap();
    let exact = steiner_marginal(&t, &c, &[0, 3, 6], None, RootInit::Stationary).unwrap();
    let p = exact[0]; // all three in state 0
    let n = 2000;
    let mut ok = 0;
    for batch in 0..100u64 {
        let s = sample_batch(&t, &c, RootInit::Stationary, 1000 + batch, n).unwrap();
        let hits = s.iter().filter(|x| x[0] == 0 && x[3] == 0 && x[6] == 0).count() as f64 / n as f64;
        if (hits - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt() {
            ok += 1;
        }
    }
    assert!(ok >= 99, "{ok}/100 batches within 4 sigma");
}

#[test]
fn csv_and_observation_formats() {
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &[vec![0, 1], vec![1, 1]]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text, "sample,vertex,state\n0,0,0\n0,1,1\n1,0,1\n1,1,1\n");
    let obs = Labeling::from_observation_json(r#"{"leaf_states": {"3": 0, "4": 1}}"#).unwrap();
    assert_eq!(obs.get(3), Some(0));
    assert_eq!(obs.get(4), Some(1));
    let back = Labeling::from_observation_json(&obs.to_observation_json()).unwrap();
    assert_eq!(back, obs);
    assert!(Labeling::from_observation_json(r#"{"leaf_states": {}, "extra": 1}"#).is_err());
}
