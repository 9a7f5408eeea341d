//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line and the
//! process exits nonzero when any of them fails.

mod common;
mod durability;
mod equivalence;
mod fixture;
mod fuzz;
mod matrix;
mod unforgeable;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

fn run(name: &str, criterion: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let result = match panic::catch_unwind(AssertUnwindSafe(criterion)) {
        Ok(result) => result,
        Err(payload) => Err(payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| (*s).to_owned()))
            .unwrap_or_else(|| "panicked".to_owned())),
    };
    let elapsed = started.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            println!("PASS {name}: {detail} ({elapsed:.2}s)");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail} ({elapsed:.2}s)");
            false
        }
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters come through here too
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut ok = true;
    ok &= run("fixture_replay_and_stats", fixture::replay_and_stats);
    ok &= run("policy_identity_matrix", matrix::exhaustive);
    let fuzz = fuzz::run(fuzz::OPERATIONS, 0x0F_F1CE);
    // the fuzz run serves two criteria; its time is in both details
    ok &= run("visibility_invariant_fuzz", || fuzz.visibility());
    ok &= run("editor_link_unforgeability", unforgeable::random_redemptions);
    ok &= run("durability_after_kill", durability::kill_points);
    ok &= run("notification_completeness", || fuzz.notifications());
    ok &= run("cli_api_equivalence", equivalence::same_exports);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
