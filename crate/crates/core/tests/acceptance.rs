//! Every acceptance criterion at its stated tolerance, one line each.
//!
//! Runs without the libtest harness so the lines are printed even on success.
//! Optional argument: a suite name or comma-separated criterion numbers.

use std::process::ExitCode;

use calabi_core::par::Exec;
use calabi_core::verify::{select, Verifier};

fn main() -> ExitCode {
    // cargo passes libtest flags (e.g. --nocapture); only a bare word selects
    let spec = std::env::args()
        .skip(1)
        .find(|a| !a.starts_with('-'))
        .unwrap_or_else(|| "all".into());
    let ids = match select(&spec) {
        Ok(ids) => ids,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            return ExitCode::FAILURE;
        }
    };
    let verifier = Verifier::new(Exec::Parallel);
    let outcomes = verifier.run(&ids);
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{} ({})", o.id, o.name))
        .collect();
    println!(
        "acceptance: {} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
