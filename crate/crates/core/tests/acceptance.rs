//! Acceptance criteria 1–13. Each test prints one PASS/FAIL line.
//!
//! Run with `--nocapture` to see the lines and the compared figures.

use sgd_landscape::verify::{run_criterion, Suite};

const SEED: u64 = 20240917;

fn check(id: u32) {
    let r = run_criterion(id, Suite::Fast, SEED);
    println!("{}", r.line());
    println!("  {}", serde_json::to_string(&r.details).unwrap());
    if let Some(e) = &r.error {
        println!("  error: {e}");
    }
    assert!(r.passed, "criterion {id} ({}) failed", r.name);
}

#[test]
fn criterion_01_strongly_convex_gap() {
    check(1);
}

#[test]
fn criterion_02_eyring_kramers_law() {
    check(2);
}

#[test]
fn criterion_03_lambda_ratio_arithmetic() {
    check(3);
}

#[test]
fn criterion_04_hitting_times() {
    check(4);
}

#[test]
fn criterion_05_fokker_planck_oracle() {
    check(5);
}

#[test]
fn criterion_06_decay_consistency() {
    check(6);
}

#[test]
fn criterion_07_weak_error_order() {
    check(7);
}

#[test]
fn criterion_08_epsilon_laws() {
    check(8);
}

#[test]
fn criterion_09_morse_structure() {
    check(9);
}

#[test]
fn criterion_10_functional_inequalities() {
    check(10);
}

#[test]
fn criterion_11_coupling_bounds() {
    check(11);
}

#[test]
fn criterion_12_decay_study_arithmetic() {
    check(12);
}

#[test]
fn criterion_13_reproducibility() {
    check(13);
}
