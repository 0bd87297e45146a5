use botlab_core::verify::*;
use nalgebra::DMatrix;

#[test]
fn telescoping_scalar_example() {
    let s = |x: f64| DMatrix::from_element(1, 1, x);
    let rhs = telescoping_rhs(&[s(1.0), s(2.0)], &[s(3.0), s(4.0)]);
    assert_eq!(rhs[(0, 0)], 24.0);
    // single factor: a + b
    assert_eq!(telescoping_rhs(&[s(1.5)], &[s(2.0)])[(0, 0)], 3.5);
}

#[test]
fn each_check_passes_at_small_trial_counts() {
    for r in [
        check_tower(1, 20),
        check_submultiplicativity(1, 200),
        check_telescoping(1, 100),
        check_projections(1, 20),
        check_decomposition(1, 10),
        check_norm_family(1, 10),
    ] {
        println!("{} {} {:e} {}", r.check_name, r.instances, r.max_residual, r.skipped);
        assert!(r.pass, "{}", serde_json::to_string_pretty(&r).unwrap());
        assert!(r.instances > 0);
    }
}

#[test]
fn corrupted_projection_is_caught() {
    let r = check_projections_with(3, 10, true);
    assert!(!r.pass);
    assert!(check_projections_with(3, 10, false).pass);
}

#[test]
fn reports_are_deterministic() {
    let a = serde_json::to_string(&check_tower(9, 10)).unwrap();
    let b = serde_json::to_string(&check_tower(9, 10)).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&check_tower(10, 10)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn full_suite_passes_at_default_trials() {
    let reports = run_verify_suite(0, &VerifyOptions::default());
    assert_eq!(reports.len(), DEFAULT_TRIALS.len());
    for (r, (name, n)) in reports.iter().zip(DEFAULT_TRIALS) {
        assert_eq!(r.check_name, name);
        assert_eq!(r.instances + r.skipped, n);
        assert!(r.pass, "{}", serde_json::to_string_pretty(r).unwrap());
    }
    assert!(suite_passes(&reports));
}
