use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    first_below, Algorithm, CentralizedLearner, ExperimentConfig, IndependentLearners, JointLearner, JointOracle,
    MmemqLearner, StepLog,
};
use crate::coordination::{MmemqSystem, ProtocolStats};
use crate::error::Result;
use crate::mdp::HystereticRates;
use crate::rng::SeedStreams;
use crate::wireless::{BsLayout, WirelessNetwork};

/// Metrics at one snapshot iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u64,
    pub aqd: f64,
    pub ape: f64,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub iterations: u64,
    /// Real environment samples, `iterations * trajectory_length`.
    pub samples: u64,
    /// Per-iteration log; empty unless tracing was requested.
    pub log: Vec<StepLog>,
    pub snapshots: Vec<Snapshot>,
    /// Greedy joint action at every reachable oracle state; empty without
    /// an oracle.
    pub final_policy: Vec<u64>,
    pub final_ape: Option<f64>,
    pub final_aqd: Option<f64>,
    /// First snapshot iteration with AQD below the configured threshold.
    pub iterations_to_aqd: Option<u64>,
    pub comms_payload: u64,
    pub coordinated_steps: u64,
    pub protocol: Option<ProtocolStats>,
    /// Excluded from the hash.
    pub wall_clock_secs: f64,
    /// SHA-256 of the record with this field blank and the wall clock zeroed.
    pub hash: String,
}

impl RunRecord {
    pub fn compute_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.hash.clear();
        canonical.wall_clock_secs = 0.0;
        let text = serde_json::to_string(&canonical).expect("record serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Base-station layout of a run: the configured layout seed when set,
/// otherwise a stream of the run seed.
pub fn build_layout(config: &ExperimentConfig, seed: u64) -> Result<BsLayout> {
    let streams = SeedStreams::new(config.run.layout_seed.unwrap_or(seed));
    BsLayout::place(&config.wireless, &mut streams.stream("layout"))
}

pub fn build_network(config: &ExperimentConfig, layout: BsLayout, seed: u64) -> Result<WirelessNetwork> {
    let streams = SeedStreams::new(seed);
    WirelessNetwork::new(config.wireless.clone(), layout, &mut streams.stream("positions"))
}

pub fn build_learner(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    layout: BsLayout,
    seed: u64,
) -> Result<Box<dyn JointLearner>> {
    let network = build_network(config, layout, seed)?;
    let streams = SeedStreams::new(seed);
    let l = &config.learner;
    Ok(match algorithm {
        Algorithm::MMemq => Box::new(MmemqLearner::new(MmemqSystem::new(network, l.clone(), &streams)?)),
        Algorithm::Centralized => Box::new(CentralizedLearner::new(
            network,
            l.gamma,
            l.trajectory_length,
            l.schedules,
            &streams,
        )?),
        Algorithm::Independent => Box::new(IndependentLearners::new(
            network,
            l.gamma,
            l.trajectory_length,
            l.schedules,
            None,
            &streams,
        )?),
        Algorithm::Hysteretic => Box::new(IndependentLearners::new(
            network,
            l.gamma,
            l.trajectory_length,
            l.schedules,
            Some(HystereticRates {
                slow_ratio: config.run.hysteretic_ratio,
            }),
            &streams,
        )?),
    })
}

/// Runs `algorithm` for the configured number of iterations.
///
/// With an oracle, AQD and APE are recorded every `snapshot_interval`
/// iterations and at the end.
pub fn run_experiment(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    seed: u64,
    layout: &BsLayout,
    oracle: Option<&JointOracle>,
) -> Result<RunRecord> {
    let start = Instant::now();
    let mut learner = build_learner(config, algorithm, layout.clone(), seed)?;
    let settings = &config.run;
    let optimal = oracle.map(|o| o.optimal_values());
    let mut log = Vec::new();
    let mut snapshots = Vec::new();
    let mut coordinated_steps = 0;
    let measure = |learner: &dyn JointLearner, t: u64| -> Result<Option<Snapshot>> {
        let (Some(o), Some(opt)) = (oracle, optimal.as_ref()) else {
            return Ok(None);
        };
        let values = learner.oracle_values(o);
        let aqd = super::aqd(&values, opt)?;
        let ape = o.ape(|s| learner.greedy(s))?;
        Ok(Some(Snapshot { t, aqd, ape }))
    };
    let l = config.learner.trajectory_length;
    for t in 1..=settings.iterations {
        for _ in 0..l {
            let step = learner.step()?;
            if step.coordinated {
                coordinated_steps += 1;
            }
            if settings.trace {
                log.push(step);
            }
        }
        if t % settings.snapshot_interval == 0 || t == settings.iterations {
            if let Some(s) = measure(learner.as_ref(), t)? {
                snapshots.push(s);
            }
        }
    }
    learner.finish();
    let final_policy = match oracle {
        Some(o) => o.states().iter().map(|&s| learner.greedy(s)).collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let series: Vec<(u64, f64)> = snapshots.iter().map(|s| (s.t, s.aqd)).collect();
    let protocol = learner.protocol_stats();
    let mut record = RunRecord {
        algorithm,
        seed,
        config_hash: config.hash(),
        iterations: settings.iterations,
        samples: learner.steps(),
        log,
        final_ape: snapshots.last().map(|s| s.ape),
        final_aqd: snapshots.last().map(|s| s.aqd),
        iterations_to_aqd: first_below(&series, settings.aqd_threshold),
        snapshots,
        final_policy,
        comms_payload: learner.comms_payload(),
        coordinated_steps,
        protocol,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        hash: String::new(),
    };
    record.hash = record.compute_hash();
    Ok(record)
}
