//! Verification campaigns, their negative controls and reproducibility.

use spatial_extremes::model::ModelSpec;
use spatial_extremes::verify::{run_campaign, run_counterexample_check, VerifyOptions, CAMPAIGNS};

fn preset(name: &str) -> ModelSpec {
    ModelSpec::preset(name).unwrap()
}

#[test]
fn identities_hold_for_iid_and_mma() {
    let opts = VerifyOptions::default();
    for m in ["iid", "mma-default"] {
        for c in ["pareto-root", "change-of-time", "rs-invariance"] {
            let run = run_campaign(c, &preset(m), &opts, 5).unwrap();
            assert!(run.passed(), "{m} {c}: {:?}", run.checks);
            assert!(run.checks.iter().any(|k| k.id.starts_with("control")), "{m} {c} has no control");
        }
    }
    let run = run_campaign("pareto-root", &preset("br-fbm"), &opts, 5).unwrap();
    assert!(run.passed(), "{:?}", run.checks);
}

#[test]
fn corrupted_spectral_field_fails() {
    let opts = VerifyOptions {
        scale: 2.0,
        ..VerifyOptions::default()
    };
    for c in ["change-of-time", "rs-invariance"] {
        let run = run_campaign(c, &preset("mma-default"), &opts, 5).unwrap();
        assert!(!run.passed(), "{c} accepted a scaled spectral field");
    }
}

#[test]
fn counterexample_groups_separate() {
    let ranks: Vec<u64> = (20..=27).collect();
    let (run, rows) = run_counterexample_check(1.0, &ranks, 20_000, 6).unwrap();
    assert!(run.passed(), "{:?}", run.checks);
    for r in &rows {
        let want = if r.rank % 2 == 1 { 0.5 } else { 0.25 };
        assert_eq!(r.limit, want);
        assert!((r.estimate.value - want).abs() <= 0.02 + 3.0 * r.estimate.se, "{r:?}");
    }
    assert!(run_counterexample_check(1.0, &[21, 23], 100, 6).is_err());
}

#[test]
fn unknown_campaign_is_an_error() {
    assert!(run_campaign("bogus", &preset("iid"), &VerifyOptions::default(), 1).is_err());
    assert_eq!(CAMPAIGNS.len(), 4);
}

#[test]
fn runs_do_not_depend_on_thread_count() {
    let go = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_campaign("rs-invariance", &preset("mma-default"), &VerifyOptions::default(), 9).unwrap())
    };
    let one = go(1);
    assert_eq!(one, go(3));
    assert_eq!(one, go(1));
}
