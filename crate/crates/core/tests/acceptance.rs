//! Runs the acceptance suite on the shipped desk-scale config and prints one
//! verdict line per criterion.
//!
//! Verdicts are reported, not asserted: the process fails only when the
//! suite itself cannot run. Set `MMEMQ_ACCEPTANCE_ONLY=1,9` to run a subset.

use std::path::Path;
use std::process::ExitCode;

use mmemq_core::experiment::{run_acceptance, ExperimentConfig};

fn main() -> ExitCode {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let config = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("acceptance: cannot load {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    let only: Option<Vec<u8>> = match std::env::var("MMEMQ_ACCEPTANCE_ONLY") {
        Ok(list) => match list.split(',').map(|s| s.trim().parse()).collect() {
            Ok(ids) => Some(ids),
            Err(e) => {
                eprintln!("acceptance: bad MMEMQ_ACCEPTANCE_ONLY {list:?}: {e}");
                return ExitCode::FAILURE;
            }
        },
        Err(_) => None,
    };
    println!("acceptance suite on {} (config {})", path.display(), &config.hash()[..12]);
    match run_acceptance(&config, only.as_deref(), |r| println!("{}", r.line())) {
        Ok(report) => {
            println!(
                "acceptance: {}/{} criteria passed; result hash {}",
                report.n_passed(),
                report.criteria.len(),
                report.hash
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("acceptance: harness error: {e}");
            ExitCode::FAILURE
        }
    }
}
