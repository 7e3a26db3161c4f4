//! Runs the full acceptance battery and prints one line per criterion.
//! Statistical checks use the fixed default seed, so the run is
//! reproducible; allow around a minute at desk scale.

use insider_val_core::battery::{run_all, DEFAULT_SEED};

#[test]
fn acceptance_battery() {
    let results = run_all(DEFAULT_SEED);
    let mut failures = Vec::new();
    for res in &results {
        println!(
            "criterion {:2} {:<28} {}",
            res.index,
            res.name,
            if res.passed { "PASS" } else { "FAIL" }
        );
        if !res.passed {
            for line in &res.details {
                println!("    {line}");
            }
            failures.push(res.name);
        }
    }
    assert!(
        failures.is_empty(),
        "{} of {} criteria failed: {:?}",
        failures.len(),
        results.len(),
        failures
    );
}
