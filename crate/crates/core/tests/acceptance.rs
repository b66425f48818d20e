//! Acceptance gate: one test per criterion, each printing a single
//! `criterion N ... PASS|FAIL` line after its detail rows.

use std::path::Path;

use reftrack::shell::parse_config;
use reftrack::verify::{self, CheckResult};

fn gate(number: usize, title: &str, suite: &str) {
    let checks: Vec<CheckResult> = verify::run_suite(suite).expect("known suite");
    for c in &checks {
        println!("  {}", c.table_row());
    }
    let ok = checks.iter().all(|c| c.passed);
    println!(
        "criterion {number} ({title}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.table_row()).collect();
    assert!(ok, "criterion {number} failed:\n{}", failed.join("\n"));
}

#[test]
fn criterion_1_kinematic_identities() {
    gate(1, "kinematic identities", "kinematics");
}

#[test]
fn criterion_2_constitutive_laws() {
    gate(2, "constitutive laws", "constitutive");
}

#[test]
fn criterion_3_cutoff() {
    gate(3, "cut-off regularization", "cutoff");
}

#[test]
fn criterion_4_transport() {
    gate(4, "transport", "transport");
}

#[test]
fn criterion_5_momentum_solver() {
    gate(5, "momentum solver", "momentum");
}

#[test]
fn criterion_6_energy_audit() {
    // the audit runs the shipped configuration
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/solid-disk-in-fluid.cfg");
    let shipped = parse_config(&path).expect("shipped config is valid").to_sim::<2>();
    assert_eq!(shipped, verify::disk_config(32, 0.02, 10));
    gate(6, "coupled energy audit", "audit");
}

#[test]
fn criterion_7_interface_implicitness() {
    gate(7, "interface implicitness", "interface");
}

#[test]
fn criterion_8_determinism() {
    gate(8, "determinism", "determinism");
}
