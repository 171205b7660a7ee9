//! One pass/fail line per acceptance criterion.
//!
//! Lines go straight to stderr so they show up even under captured output.

use std::io::Write;

use wpcn::harness::acceptance::{self, CriterionReport};

fn check(r: CriterionReport) {
    let _ = std::io::stderr().write_all(format!("{}\n", r.line()).as_bytes());
    assert!(r.passed, "{}", r.line());
}

#[test]
fn criterion_1_error_rate() {
    check(acceptance::ber_agreement());
}

#[test]
fn criterion_2_cross_validation() {
    check(acceptance::solver_cross_validation());
}

#[test]
fn criterion_3_convergence() {
    check(acceptance::convergence_reproduction());
}

#[test]
fn criterion_4_beta_sweep() {
    check(acceptance::beta_sweep_shape());
}

#[test]
fn criterion_5_reductions() {
    check(acceptance::reductions());
}

#[test]
fn criterion_6_containment() {
    check(acceptance::containment());
}

#[test]
fn criterion_7_kkt() {
    check(acceptance::kkt_certificates());
}

#[test]
fn criterion_8a_lambert() {
    check(acceptance::lambert_round_trip());
}

#[test]
fn criterion_8b_concavity() {
    check(acceptance::rate_concavity());
}

#[test]
fn criterion_8c_hessian() {
    check(acceptance::hessian_structure());
}

#[test]
fn criterion_8d_trends() {
    check(acceptance::sweep_trends());
}
