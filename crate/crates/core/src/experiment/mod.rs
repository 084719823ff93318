//! Experiment driver: configuration, the baselines, the exact joint
//! reference, metrics, seeded runs, parameter sweeps and the acceptance
//! suite.

mod acceptance;
mod config;
mod curves;
mod learners;
mod metrics;
mod oracle;
mod run;
mod sweep;

pub use acceptance::{run_acceptance, trailing_window_means, AcceptanceReport, CriterionResult, CRITERIA};
pub use config::{AcceptanceSettings, Algorithm, ExperimentConfig, OutputConfig, RunSettings, SweepAxis};
pub use curves::{arss_grid, threshold_curve, with_agents, GeometrySample, ThresholdRow};
pub use learners::{schedule_index, CentralizedLearner, IndependentLearners, JointLearner, MmemqLearner, StepLog};
pub use metrics::{ape, aqd, first_below, linear_fit, mean_std, LinearFit, MeanStd};
pub use oracle::{agent_oracles, JointOracle};
pub use run::{build_layout, build_learner, build_network, run_experiment, RunRecord, Snapshot};
pub use sweep::{git_revision, run_sweep, sweep_cells, write_sweep_csv, CellResult, SweepCell};
