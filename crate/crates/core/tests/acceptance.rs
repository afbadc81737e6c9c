//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! with the measured values. The tests share the machine's threads, so they
//! run one at a time.

use std::sync::Mutex;

use dicelab::acceptance::{run_criterion, AcceptanceConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn check(id: u32) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let outcome = run_criterion(id, &AcceptanceConfig::default()).expect("criterion ran");
    println!("{} ({:.1} s)", outcome.line(), outcome.seconds);
    for (k, v) in &outcome.metrics {
        println!("    {k} = {v}");
    }
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn criterion_01_efron_cycle() {
    check(1);
}

#[test]
fn criterion_02_three_dice_uniformity() {
    check(2);
}

#[test]
fn criterion_03_non_quasirandomness() {
    check(3);
}

#[test]
fn criterion_04_reduction_identities() {
    check(4);
}

#[test]
fn criterion_05_moment_asymptotics() {
    check(5);
}

#[test]
fn criterion_06_simple_integrals() {
    check(6);
}

#[test]
fn criterion_07_conditional_moment_spot_checks() {
    check(7);
}

#[test]
fn criterion_08_edgeworth_convergence() {
    check(8);
}

#[test]
fn criterion_09_characteristic_function_bounds() {
    check(9);
}

#[test]
fn criterion_10_sup_norm_and_half_integrality() {
    check(10);
}

#[test]
fn criterion_11_orthant_probabilities() {
    check(11);
}

#[test]
fn criterion_12_conditional_clt_discrepancy() {
    check(12);
}

#[test]
fn criterion_13_engineering() {
    check(13);
}
