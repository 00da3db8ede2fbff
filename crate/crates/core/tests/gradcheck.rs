mod common;

use common::{loss_cases, objective_cases, op_cases, MAX_REL_ERR};

fn assert_all(cases: Vec<(&str, f64)>) {
    let failed: Vec<_> = cases.iter().filter(|(_, e)| !(*e <= MAX_REL_ERR)).collect();
    assert!(failed.is_empty(), "relative error above {MAX_REL_ERR}: {failed:?}");
}

#[test]
fn primitive_ops_match_finite_differences() {
    assert_all(op_cases().unwrap());
}

#[test]
fn losses_and_regularizers_match_finite_differences() {
    assert_all(loss_cases().unwrap());
}

#[test]
fn generator_objective_matches_finite_differences() {
    assert_all(objective_cases().unwrap());
}
