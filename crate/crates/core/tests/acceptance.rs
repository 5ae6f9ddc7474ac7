//! One PASS/FAIL line per acceptance criterion.

use blwave_core::selftest::run_criterion;

#[test]
fn acceptance() {
    let mut unexpected = Vec::new();
    for id in 1..=14 {
        let r = run_criterion(id);
        println!("{r}");
        if !r.passed && r.known_deviation.is_none() {
            unexpected.push(id);
        }
    }
    assert!(unexpected.is_empty(), "criteria failing without a recorded deviation: {unexpected:?}");
}
