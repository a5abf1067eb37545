use mmflow::verify::*;
use proptest::prelude::*;

const CONFIG: &str = r#"{
  "seed": 3,
  "instances": [
    {"id": "chain", "setting": {"kind": "random_chain", "n": 5},
     "checks": [{"check": "convex_contraction", "integrand": "kl", "samples": 2, "t_grid": [0.0, 0.2, 1.0]},
                {"check": "hellinger_contraction", "p": 1.5, "t_grid": [0.2, 1.0]},
                {"check": "variance_bound", "t_grid": [0.5]}]},
    {"id": "g", "setting": {"kind": "gaussian"},
     "checks": [{"check": "entropy_decay", "mu0": {"kind": "gaussian", "mean": 1.0, "var": 0.5}, "t_grid": [0.5, 1.0]}]}
  ]
}"#;

#[test]
fn reports_are_reproducible_and_sorted() {
    let config = SuiteConfig::from_json(CONFIG).unwrap();
    let a = run_suite_with_threads(&config, 1).unwrap();
    let b = run_suite_with_threads(&config, 2).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.records.windows(2).all(|w| w[0].sort_key_cmp(&w[1]).is_le()));
    assert!(a.records.iter().all(CheckRecord::is_consistent));
    assert_eq!(a.total, a.passed + a.failed + a.inconclusive);
    assert!(a.is_success(true));
    let back: SuiteReport = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(back.records, a.records);
}

#[test]
fn seed_changes_samples() {
    let mut config = SuiteConfig::from_json(CONFIG).unwrap();
    let a = run_suite(&config).unwrap();
    config.seed = 4;
    let b = run_suite(&config).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn rejects_bad_configs() {
    for text in [
        r#"{"instances": [{"id": "a", "setting": {"kind": "gaussian"}, "checks": [{"check": "be_gradient", "t_grid": [1]}]}]}"#,
        r#"{"instances": [{"id": "a", "setting": {"kind": "random_chain", "n": 3}, "checks": [{"check": "convex_contraction", "integrand": "cubic", "t_grid": [1]}]}]}"#,
        r#"{"instances": [{"id": "a", "setting": {"kind": "random_chain", "n": 3}, "checks": []}, {"id": "a", "setting": {"kind": "gaussian"}, "checks": []}]}"#,
        r#"{"instances": [], "extra": 1}"#,
    ] {
        assert!(SuiteConfig::from_json(text).is_err(), "{text}");
    }
}

proptest! {
    #[test]
    fn record_verdict_matches_slack(lhs in -10.0f64..10.0, rhs in -10.0f64..10.0, tol in 0.0f64..1.0) {
        let r = CheckRecord::new("x", Params::new(), lhs, rhs, tol, Exactness::Exact);
        prop_assert!(r.is_consistent());
        prop_assert_eq!(r.verdict == Verdict::Pass, rhs - lhs >= -tol);
        let back: CheckRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}
