//! One line per acceptance criterion. Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::criteria::{self, Outcome};
use common::fixtures::{trained_synthetic, Trained};
use kgsel_core::experiment::TrainingConfig;

struct Check {
    id: &'static str,
    name: &'static str,
    budget: Duration,
}

fn report(check: &Check, outcome: Option<Outcome>, elapsed: Duration) -> bool {
    let secs = elapsed.as_secs_f64();
    let over = elapsed > check.budget;
    match outcome {
        None => {
            println!("SKIP {} {}: {} not set", check.id, check.name, criteria::DATASET_ENV);
            true
        }
        Some(Ok(msg)) if !over => {
            println!("PASS {} {} ({secs:.2}s): {msg}", check.id, check.name);
            true
        }
        Some(Ok(msg)) => {
            println!("FAIL {} {} ({secs:.2}s, budget {:?}): {msg}", check.id, check.name, check.budget);
            false
        }
        Some(Err(msg)) => {
            println!("FAIL {} {} ({secs:.2}s): {msg}", check.id, check.name);
            false
        }
    }
}

fn main() -> ExitCode {
    let s = Duration::from_secs;
    let mut ok = true;
    let mut run = |check: Check, f: &dyn Fn() -> Option<Outcome>| {
        let start = Instant::now();
        let outcome = f();
        ok &= report(&check, outcome, start.elapsed());
    };

    run(Check { id: "AC1", name: "metric oracles", budget: s(5) }, &|| Some(criteria::metric_oracles()));
    run(Check { id: "AC2", name: "entity name normalization", budget: s(1) }, &|| {
        Some(criteria::normalization_table())
    });
    run(Check { id: "AC3", name: "fuzzy match ratio", budget: s(5) }, &|| Some(criteria::fuzzy_matching()));

    // Training is shared by the checks below and timed on its own.
    let start = Instant::now();
    let trained: Trained = trained_synthetic(&TrainingConfig::default());
    println!("info: synthetic corpus and models ready in {:.2}s", start.elapsed().as_secs_f64());

    run(Check { id: "AC4", name: "hierarchical filter soundness", budget: s(60) }, &|| {
        Some(criteria::filter_soundness(&trained))
    });
    run(Check { id: "AC5", name: "synthetic end-to-end quality", budget: s(120) }, &|| {
        Some(criteria::end_to_end(&trained))
    });
    run(Check { id: "AC6", name: "mixed negative sampling", budget: s(120) }, &|| {
        Some(criteria::negative_sampling(&trained))
    });
    run(Check { id: "AC7", name: "threshold tuning optimality", budget: s(5) }, &|| {
        Some(criteria::threshold_tuner())
    });
    run(Check { id: "AC8", name: "dataset statistics", budget: s(120) }, &criteria::dataset_tables);
    run(Check { id: "AC9", name: "gateway conformance", budget: s(120) }, &|| {
        Some(criteria::gateway_conformance(&trained))
    });

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
