//! `mmemq`: run experiments, parameter sweeps, bound curves and the
//! acceptance suite from a TOML config.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 acceptance failure,
//! 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mmemq_core::experiment::{
    arss_grid, build_layout, run_acceptance, run_experiment, run_sweep, threshold_curve, with_agents,
    write_sweep_csv, Algorithm, ExperimentConfig, GeometrySample, JointOracle, RunRecord,
};
use mmemq_core::rng::SeedStreams;
use mmemq_core::Error;

#[derive(Parser)]
#[command(name = "mmemq", version, about = "Partially decentralized multi-agent Q-learning on a grid wireless network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print a JSON summary.
    Run(RunArgs),
    /// Run every cell of the configured sweep axes and write a CSV.
    Sweep(SweepArgs),
    /// Tabulate misdetection bounds over an ARSS threshold grid.
    Bounds(BoundsArgs),
    /// Run the acceptance suite; exits 3 if any criterion fails.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config; the built-in desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for result files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// m_memq, centralized, independent or hysteretic.
    #[arg(long)]
    algo: Option<String>,
    /// Keep the per-iteration log in the written record.
    #[arg(long)]
    trace: bool,
    /// Skip the exact joint reference (no APE/AQD).
    #[arg(long)]
    no_oracle: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    no_oracle: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    /// Swept quantity; only `I_thr` is supported.
    #[arg(long, default_value = "I_thr")]
    sweep: String,
    #[arg(long, default_value_t = 2)]
    agents: usize,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated criterion ids to run, e.g. `2,9,10`.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u8>>,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Acceptance failure; maps to exit code 3.
#[derive(Debug)]
struct AcceptanceFailed(usize);

impl std::fmt::Display for AcceptanceFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} acceptance criteria failed", self.0)
    }
}

impl std::error::Error for AcceptanceFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(2)
            } else if e.is::<AcceptanceFailed>() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let loaded = match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    loaded.map_err(|e| ConfigError(e.to_string()).into())
}

fn config_error(e: Error) -> anyhow::Error {
    match e {
        Error::Config(_) | Error::Validation(_) => ConfigError(e.to_string()).into(),
        other => other.into(),
    }
}

fn parse_algo(name: Option<&str>, fallback: Algorithm) -> Result<Algorithm> {
    match name {
        Some(n) => Algorithm::parse(n).map_err(config_error),
        None => Ok(fallback),
    }
}

fn ensure_dir(out: &Option<PathBuf>) -> Result<Option<&Path>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(Some(dir.as_path()))
        }
        None => Ok(None),
    }
}

fn summary(record: &RunRecord) -> serde_json::Value {
    json!({
        "algorithm": record.algorithm.label(),
        "seed": record.seed,
        "config_hash": record.config_hash,
        "iterations": record.iterations,
        "samples": record.samples,
        "final_ape": record.final_ape,
        "final_aqd": record.final_aqd,
        "iterations_to_aqd": record.iterations_to_aqd,
        "comms_payload": record.comms_payload,
        "coordinated_steps": record.coordinated_steps,
        "wall_clock_secs": record.wall_clock_secs,
        "hash": record.hash,
    })
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = load_config(args.common.config.as_deref())?;
    let algo = parse_algo(args.algo.as_deref(), config.algorithm)?;
    if args.trace {
        config.run.trace = true;
    }
    let seed = args.seed.unwrap_or(config.run.seeds[0]);
    let layout = build_layout(&config, seed)?;
    let oracle = if args.no_oracle {
        None
    } else {
        Some(JointOracle::build(&config.wireless, &layout, config.learner.gamma, config.run.oracle_tolerance)?)
    };
    let record = run_experiment(&config, algo, seed, &layout, oracle.as_ref())?;
    if let Some(dir) = ensure_dir(&args.common.out)? {
        let path = dir.join(format!("run_{}_{seed}.json", algo.label()));
        fs::write(&path, serde_json::to_string_pretty(&record)?).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&summary(&record))?);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut config = load_config(args.common.config.as_deref())?;
    config.algorithm = parse_algo(args.algo.as_deref(), config.algorithm)?;
    let cells = run_sweep(&config, !args.no_oracle)?;
    let dir = ensure_dir(&args.common.out)?.map_or_else(|| config.output.dir.clone(), Path::to_path_buf);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("sweep.csv");
    write_sweep_csv(&path, &config, &cells)?;
    let refused = cells.iter().filter(|c| c.refused.is_some()).count();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "cells": cells.len(),
            "refused": refused,
            "csv": path.display().to_string(),
        }))?
    );
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    if args.sweep != "I_thr" {
        return Err(ConfigError(format!("unsupported sweep `{}`; only I_thr is available", args.sweep)).into());
    }
    let base = load_config(args.common.config.as_deref())?;
    let config = with_agents(&base, args.agents).map_err(config_error)?;
    let seed = args.seed.unwrap_or(config.run.seeds[0]);
    let layout = build_layout(&config, seed)?;
    let streams = SeedStreams::new(seed);
    let sample = GeometrySample::draw(
        &config,
        layout,
        seed,
        config.acceptance.geometry_samples,
        &mut streams.stream("geometry"),
    )?;
    let grid = arss_grid(&config, args.points).map_err(config_error)?;
    // The snapshot is the first sampled configuration.
    let rows = threshold_curve(&config, &sample, &sample.profiles[0], &grid)?;

    let mut text = String::new();
    text.push_str(&format!("# agents = {}\n# seed = {seed}\n# config_hash = {}\n", args.agents, config.hash()));
    text.push_str("i_thr,lower,upper,delta,general_lower,general_upper,coordinated_fraction\n");
    for row in &rows {
        match row.two_agent {
            Some((lo, hi, delta)) => text.push_str(&format!(
                "{},{lo},{hi},{delta},{},{},{}\n",
                row.threshold, row.general_lower, row.general_upper, row.coordinated_fraction
            )),
            None => text.push_str(&format!(
                "# i_thr = {}: closed-form pair refused ({}); general bounds {} .. {}\n",
                row.threshold,
                row.refused.as_deref().unwrap_or("undefined"),
                row.general_lower,
                row.general_upper
            )),
        }
    }
    match ensure_dir(&args.common.out)? {
        Some(dir) => {
            let path = dir.join("bounds_i_thr.csv");
            fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let config = load_config(args.common.config.as_deref())?;
    if let Some(ids) = &args.only {
        if ids.is_empty() || ids.iter().any(|id| !(1..=10).contains(id)) {
            bail!(ConfigError("criterion ids must be in 1..=10".into()));
        }
    }
    let report = run_acceptance(&config, args.only.as_deref(), |r| println!("{}", r.line()))?;
    let failed = report.criteria.len() - report.n_passed();
    let verdicts = json!({
        "config_hash": report.config_hash,
        "passed": report.n_passed(),
        "failed": failed,
        "hash": report.hash,
        "criteria": report.criteria,
    });
    if let Some(dir) = ensure_dir(&args.common.out)? {
        let path = dir.join("acceptance.json");
        fs::write(&path, serde_json::to_string_pretty(&verdicts)?).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("passed {}/{}; hash {}", report.n_passed(), report.criteria.len(), report.hash);
    if failed > 0 {
        return Err(AcceptanceFailed(failed).into());
    }
    Ok(())
}
