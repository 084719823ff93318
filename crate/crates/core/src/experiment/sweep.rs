use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_layout, mean_std, run_experiment, ExperimentConfig, JointOracle, MeanStd, RunRecord};
use crate::error::{Error, Result};

/// One point of the Cartesian product of sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// `(key, value)` per axis, in axis order.
    pub point: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

/// Expands the configured axes; no axes gives a single cell.
pub fn sweep_cells(config: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let mut cells = vec![SweepCell {
        point: Vec::new(),
        config: config.clone(),
    }];
    for axis in &config.sweep {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for cell in &cells {
            for v in &axis.values {
                let mut point = cell.point.clone();
                point.push((axis.key.clone(), v.to_string()));
                next.push(SweepCell {
                    point,
                    config: cell.config.with_override(&axis.key, v.clone())?,
                });
            }
        }
        cells = next;
    }
    Ok(cells)
}

/// Aggregated metrics of one cell over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub point: Vec<(String, String)>,
    /// `None` when the cell ran; otherwise why it was refused.
    pub refused: Option<String>,
    pub ape: MeanStd,
    pub aqd: MeanStd,
    pub wall_clock_secs: MeanStd,
    pub iterations: u64,
    pub comms: MeanStd,
    /// Over the seeds that reached the AQD threshold.
    pub iterations_to_aqd: MeanStd,
    pub records: Vec<RunRecord>,
}

fn summarize(point: Vec<(String, String)>, records: Vec<RunRecord>, iterations: u64) -> CellResult {
    let pick = |f: &dyn Fn(&RunRecord) -> Option<f64>| mean_std(&records.iter().filter_map(f).collect::<Vec<_>>());
    CellResult {
        point,
        refused: None,
        ape: pick(&|r| r.final_ape),
        aqd: pick(&|r| r.final_aqd),
        wall_clock_secs: pick(&|r| Some(r.wall_clock_secs)),
        iterations,
        comms: pick(&|r| Some(r.comms_payload as f64)),
        iterations_to_aqd: pick(&|r| r.iterations_to_aqd.map(|t| t as f64)),
        records,
    }
}

fn refused(point: Vec<(String, String)>, why: String) -> CellResult {
    let empty = mean_std(&[]);
    CellResult {
        point,
        refused: Some(why),
        ape: empty,
        aqd: empty,
        wall_clock_secs: empty,
        iterations: 0,
        comms: empty,
        iterations_to_aqd: empty,
        records: Vec::new(),
    }
}

/// Runs every cell for every seed; seeds run in parallel.
///
/// Cells whose layout or oracle cannot be built (enumeration cap, placement
/// failure) are recorded as refused.
pub fn run_sweep(config: &ExperimentConfig, with_oracle: bool) -> Result<Vec<CellResult>> {
    let mut out = Vec::new();
    for cell in sweep_cells(config)? {
        let c = &cell.config;
        let layouts: Vec<_> = match c.run.layout_seed {
            Some(_) => vec![build_layout(c, 0)],
            None => c.run.seeds.iter().map(|&s| build_layout(c, s)).collect(),
        };
        if let Some(Err(e)) = layouts.iter().find(|l| l.is_err()) {
            out.push(refused(cell.point, e.to_string()));
            continue;
        }
        let layouts: Vec<_> = layouts.into_iter().map(|l| l.expect("checked")).collect();
        let oracles: Vec<Option<JointOracle>> = if with_oracle {
            let built: Vec<Result<JointOracle>> = layouts
                .iter()
                .map(|l| JointOracle::build(&c.wireless, l, c.learner.gamma, c.run.oracle_tolerance))
                .collect();
            match built.iter().find_map(|o| o.as_ref().err()) {
                Some(e) => {
                    out.push(refused(cell.point, e.to_string()));
                    continue;
                }
                None => built.into_iter().map(|o| o.ok()).collect(),
            }
        } else {
            layouts.iter().map(|_| None).collect()
        };
        let records: Result<Vec<RunRecord>> = c
            .run
            .seeds
            .par_iter()
            .enumerate()
            .map(|(k, &seed)| {
                let j = if layouts.len() == 1 { 0 } else { k };
                run_experiment(c, c.algorithm, seed, &layouts[j], oracles[j].as_ref())
            })
            .collect();
        match records {
            Ok(r) => out.push(summarize(cell.point, r, c.run.iterations)),
            Err(e @ Error::EnumerationCap { .. }) => out.push(refused(cell.point, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Current git revision, if the working directory is a repository.
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes `#`-prefixed metadata lines followed by a header and one row per
/// cell.
pub fn write_sweep_csv(path: &Path, config: &ExperimentConfig, cells: &[CellResult]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# config_hash = {}", config.hash())?;
    writeln!(file, "# git_revision = {}", git_revision())?;
    writeln!(file, "# algorithm = {}", config.algorithm.label())?;
    let seeds: Vec<String> = config.run.seeds.iter().map(|s| s.to_string()).collect();
    writeln!(file, "# seeds = {}", seeds.join(" "))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = config.sweep.iter().map(|a| a.key.clone()).collect();
    for h in [
        "status",
        "ape_mean",
        "ape_std",
        "aqd_mean",
        "aqd_std",
        "wall_secs_mean",
        "wall_secs_std",
        "iterations",
        "comms_mean",
        "comms_std",
        "iters_to_aqd_mean",
        "iters_to_aqd_std",
        "iters_to_aqd_n",
    ] {
        header.push(h.into());
    }
    w.write_record(&header)?;
    for cell in cells {
        let mut row: Vec<String> = cell.point.iter().map(|(_, v)| v.clone()).collect();
        row.push(cell.refused.as_ref().map_or("ok".into(), |r| format!("refused: {r}")));
        for m in [&cell.ape, &cell.aqd, &cell.wall_clock_secs] {
            row.push(m.mean.to_string());
            row.push(m.std.to_string());
        }
        row.push(cell.iterations.to_string());
        for m in [&cell.comms, &cell.iterations_to_aqd] {
            row.push(m.mean.to_string());
            row.push(m.std.to_string());
        }
        row.push(cell.iterations_to_aqd.n.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
