//! Runs every acceptance check and prints one PASS/FAIL line per criterion.
//!
//! Set `ACCEPTANCE_TRACKS` to shrink the tracking ensemble for a quick look;
//! the default is the full 200-track run.

use std::process::ExitCode;

use beamtrack::acceptance::{run_acceptance, AcceptanceConfig};

/// Checks whose failure is understood and documented in the README
/// ("Known failure"). They still print FAIL.
const KNOWN_FAILURES: &[&str] = &["2b", "5c"];

fn main() -> ExitCode {
    let mut cfg = AcceptanceConfig::default();
    if let Some(n) = std::env::var("ACCEPTANCE_TRACKS").ok().and_then(|v| v.parse().ok()) {
        cfg.tracks = n;
    }
    let results = run_acceptance(&cfg, |o| println!("{o}"));
    let unexpected: Vec<_> = results
        .iter()
        .filter(|o| !o.passed && !KNOWN_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let passed = results.iter().filter(|o| o.passed).count();
    println!("{passed}/{} checks passed", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
