//! Release gate: every criterion runs at full scale and prints one line.

use smcvar::acceptance::{run_suite, Suite, DEFAULT_SEED};

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    for suite in Suite::ALL {
        let report = run_suite(suite, DEFAULT_SEED);
        for check in &report.checks {
            println!("    {check}");
        }
        println!("{}", report.summary_line());
        if !report.pass() {
            failed.push(suite.name());
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
