//! Acceptance suite A1–A11. Each test prints one PASS/FAIL line plus its
//! checks, then asserts the criterion. Thresholds and tolerances are pinned
//! in `lossless_hedge::harness::criteria` and the checked-in calibration.

use lossless_hedge::harness::calibration;
use lossless_hedge::harness::criteria::{self, Mutation};
use std::io::Write as _;
use std::sync::Mutex;

// Criteria carry runtime limits, so they run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn check(id: &str) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cal = calibration::frozen();
    let r = criteria::run_criterion(id, &cal, Mutation::None).expect("criterion runs");
    // Written to the raw handle so the line shows even when output is captured.
    let _ = std::io::stderr().write_all(r.render().as_bytes());
    assert_eq!(r.id, id);
    assert!(r.pass, "{id} failed:\n{}", r.render());
}

#[test]
fn a01_regret_loss_tradeoff() {
    check("A1");
}

#[test]
fn a02_drift_condition() {
    check("A2");
}

#[test]
fn a03_telescoping_identities() {
    check("A3");
}

#[test]
fn a04_pairwise_combiner() {
    check("A4");
}

#[test]
fn a05_windowed_regret() {
    check("A5");
}

#[test]
fn a06_z_uniformity() {
    check("A6");
}

#[test]
fn a07_noise_like_prediction() {
    check("A7");
}

#[test]
fn a08_transaction_costs() {
    check("A8");
}

#[test]
fn a09_bandit_scaling() {
    check("A9");
}

#[test]
fn a10_online_convex_optimization() {
    check("A10");
}

#[test]
fn a11_lower_bound_probes() {
    check("A11");
}
