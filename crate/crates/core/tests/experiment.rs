use botlab_core::experiment::*;
use botlab_core::{Error, TransitionChain};
use proptest::prelude::*;

fn write_chain(dir: &std::path::Path, delta: f64) {
    let text = format!(r#"{{"q":2,"rows":[[{a},{delta}],[{delta},{a}]]}}"#, a = 1.0 - delta);
    std::fs::write(dir.join("chain.json"), text).unwrap();
}

fn config(depth_max: usize, family: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"chain":"chain.json","d":2,"depth_min":1,"depth_max":{depth_max},"family":{family}}}"#
    ))
    .unwrap()
}

/// Census ratio on the complete d-ary tree, summed directly.
fn census_closed_form(d: usize, lambda: f64, l: usize) -> f64 {
    let (d, l2) = (d as f64, lambda * lambda);
    let noise: f64 = 1.0 + (1..=l).map(|j| (d - 1.0) * d.powi(j as i32 - 1) * l2.powi(j as i32)).sum::<f64>();
    (d * l2).powi(l as i32) / noise
}

#[test]
fn census_sweep_below_threshold() {
    let chain = TransitionChain::bsc(0.3).unwrap();
    let rows = decay_sweep_with_chain(&config(10, r#"{"kind":"census"}"#), &chain).unwrap();
    assert_eq!(rows.len(), 10);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!((r.depth, r.degree), (i + 1, 1));
        assert!((r.var_ratio - census_closed_form(2, 0.4, r.depth)).abs() < 1e-12);
        assert!((r.ks_param - 0.32).abs() < 1e-12);
        let eps = r.eps.unwrap();
        assert!((r.ref_bound.unwrap() - (-eps * r.depth as f64).exp()).abs() < 1e-15);
    }
    for w in rows.windows(2) {
        assert!(w[1].var_ratio < w[0].var_ratio);
        if w[0].depth >= 5 {
            assert!((w[1].var_ratio / w[0].var_ratio / 0.32 - 1.0).abs() < 0.05);
        }
    }
}

#[test]
fn census_sweep_above_threshold_has_no_bound_columns() {
    let chain = TransitionChain::bsc(0.1).unwrap();
    let rows = decay_sweep_with_chain(&config(10, r#"{"kind":"census"}"#), &chain).unwrap();
    for r in &rows {
        assert!(r.var_ratio >= 0.1, "{r:?}");
        assert!(r.eps.is_none() && r.ref_bound.is_none());
    }
    let mut buf = Vec::new();
    write_decay_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",,"));
}

#[test]
fn csv_schema_and_digits() {
    let chain = TransitionChain::bsc(0.3).unwrap();
    let rows = decay_sweep_with_chain(&config(3, r#"{"kind":"census"}"#), &chain).unwrap();
    let mut buf = Vec::new();
    write_decay_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "depth,degree,var_ratio,ks_param,eps,ref_bound");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    // 8/29 at 17 significant digits
    assert_eq!(first[2], "2.7586206896551724e-1");
    for cell in &first[2..] {
        let mantissa = cell.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17, "{cell}");
        assert_eq!(cell.parse::<f64>().unwrap().to_bits(), fmt_f64(cell.parse().unwrap()).parse::<f64>().unwrap().to_bits());
    }
    assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
}

#[test]
fn sweep_is_byte_deterministic_from_file() {
    let dir = tempfile::tempdir().unwrap();
    write_chain(dir.path(), 0.25);
    let cfg = r#"{"chain":"chain.json","d":2,"depth_min":2,"depth_max":5,
        "family":{"kind":"random-es","degree":2,"seed":7,"count":3,"terms":5},"seed":1}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let render = || {
        let c = ExperimentConfig::from_file(dir.path().join("cfg.json")).unwrap();
        let mut buf = Vec::new();
        write_decay_csv(&run_decay_sweep(&c).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 3);
    for line in text.lines().skip(1) {
        let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert!(line.split(',').nth(1).unwrap().parse::<usize>().unwrap() <= 2);
    }
}

#[test]
fn function_file_family() {
    let dir = tempfile::tempdir().unwrap();
    write_chain(dir.path(), 0.3);
    // leaves 3..=6 of the depth-2 binary tree
    let f = r#"{"terms":[{"support":[3,4],"table":[1,0,0,1]},{"support":[5],"table":[1,-1]}]}"#;
    std::fs::write(dir.path().join("f.json"), f).unwrap();
    let cfg = r#"{"chain":"chain.json","d":2,"depth_min":2,"depth_max":2,"family":{"kind":"file","path":"f.json"}}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let c = ExperimentConfig::from_file(dir.path().join("cfg.json")).unwrap();
    let rows = run_decay_sweep(&c).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].degree, 2);
    // the same file is not a leaf function at depth 3
    let cfg3 = cfg.replace(r#""depth_min":2,"depth_max":2"#, r#""depth_min":3,"depth_max":3"#);
    std::fs::write(dir.path().join("cfg.json"), cfg3).unwrap();
    let c = ExperimentConfig::from_file(dir.path().join("cfg.json")).unwrap();
    assert!(matches!(run_decay_sweep(&c), Err(Error::SupportMismatch(_))));
}

#[test]
fn config_rejections() {
    let bad = |s: &str| ExperimentConfig::from_json(s).unwrap_err();
    assert!(matches!(
        bad(r#"{"chain":"c","d":2,"depth_min":1,"depth_max":3,"family":{"kind":"census"},"typo":1}"#),
        Error::ConfigInvalid(_)
    ));
    assert!(matches!(
        bad(r#"{"chain":"c","d":2,"depth_min":1,"depth_max":3,"family":{"kind":"random-es","degree":0,"seed":1}}"#),
        Error::ConfigInvalid(_)
    ));
    assert!(matches!(bad(r#"{"chain":"c","d":2,"depth_min":4,"depth_max":3,"family":{"kind":"census"}}"#), Error::ConfigInvalid(_)));
    assert!(matches!(
        bad(r#"{"chain":"c","d":2,"depth_min":1,"depth_max":30,"family":{"kind":"census"}}"#),
        Error::SizeLimit { .. }
    ));
}

#[test]
fn ks_sweep_brackets_threshold() {
    let grid = delta_grid(0.05, 0.45, 0.05);
    assert_eq!(grid.len(), 9);
    let rows = run_ks_sweep(&grid, 2, 8).unwrap();
    for r in &rows {
        assert!((r.signal_ratio - r.ks_param).abs() < 1e-9);
        assert!(r.succ_ratio < 1.0);
    }
    // succ_ratio is monotone in dλ² (which decreases along the grid)
    for w in rows.windows(2) {
        assert!(w[1].succ_ratio < w[0].succ_ratio);
    }
    let star = (1.0 - 1.0 / 2f64.sqrt()) / 2.0;
    let b = ks_brackets(&rows);
    assert_eq!(b.len(), 1);
    assert!(b[0].0 < star && star < b[0].1);
    assert!((b[0].0 - 0.1).abs() < 1e-12 && (b[0].1 - 0.15).abs() < 1e-12);
}

#[test]
fn ks_sweep_path_and_empty() {
    let rows = run_ks_sweep(&[0.1, 0.2, 0.3], 1, 6).unwrap();
    for r in &rows {
        let l2 = (1.0 - 2.0 * r.delta).powi(2);
        assert!((r.succ_ratio - l2).abs() < 1e-12);
        assert!((r.var_ratio - l2.powi(6)).abs() < 1e-12);
    }
    let mut buf = Vec::new();
    write_ks_csv(&run_ks_sweep(&[], 2, 8).unwrap(), &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "delta,ks_param,var_ratio_prev,var_ratio,succ_ratio,signal_ratio\n");
    assert!(run_ks_sweep(&[0.5], 2, 8).is_err());
    assert!(delta_grid(0.3, 0.1, 0.05).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn succ_ratio_monotone_in_ks(a in 0.02f64..0.48, b in 0.02f64..0.48) {
        prop_assume!((a - b).abs() > 1e-3);
        let rows = run_ks_sweep(&[a.min(b), a.max(b)], 2, 6).unwrap();
        prop_assert!(rows[0].ks_param > rows[1].ks_param);
        prop_assert!(rows[0].succ_ratio > rows[1].succ_ratio);
    }
}
