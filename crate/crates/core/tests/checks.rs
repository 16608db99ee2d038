use std::f64::consts::PI;

use hyperch::checks::{CheckSuite, CHECK_NAMES};
use hyperch::model::Nonlinearity;
use hyperch::Error;

fn suite(nl: Nonlinearity) -> CheckSuite {
    CheckSuite {
        resolutions: vec![16, 32],
        side: PI,
        nl,
        seed: 1,
    }
}

#[test]
fn default_suite_passes() {
    let res = suite(Nonlinearity::new(1.0, 0.0, -1.0).unwrap()).run(None).unwrap();
    assert_eq!(res.len(), 6 * 2 + 1);
    for r in &res {
        assert!(r.passed, "{r:?}");
    }
    let names: Vec<&str> = res.iter().map(|r| r.name.as_str()).collect();
    for n in CHECK_NAMES {
        assert!(names.contains(&n));
    }
}

#[test]
fn broken_lambda_bound_fails_assumptions() {
    let nl = Nonlinearity::new(1.0, 0.0, -1.0).unwrap().with_lambda_bound(0.0);
    let res = suite(nl).run(Some("assumptions")).unwrap();
    assert_eq!(res.len(), 2);
    assert!(res.iter().all(|r| !r.passed && r.value > 0.9));
}

#[test]
fn only_selects_one_check() {
    let res = suite(Nonlinearity::zero()).run(Some("parseval")).unwrap();
    assert!(res.iter().all(|r| r.name == "parseval" && r.passed));
    assert!(matches!(suite(Nonlinearity::zero()).run(Some("nope")), Err(Error::InvalidParameter(_))));
}
