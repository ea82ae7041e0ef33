//! The ten acceptance criteria at their stated tolerances and time limits.
//! Runs without the libtest harness so each PASS/FAIL line is always printed.

use std::process::ExitCode;

use kbcost::verify::{criterion, CRITERIA, DEFAULT_SEED};

fn main() -> ExitCode {
    let mut failed = 0;
    for &id in &CRITERIA {
        let c = criterion(id, DEFAULT_SEED);
        println!("{}", c.line());
        if !(c.passed && c.within_limit()) {
            println!("  measurements: {}", c.measurements);
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
