//! Multi-agent layer: noisy coordination detection, windowed Bayesian
//! estimation of the other agents' states, the leader's joint table, the
//! four-case update dispatch and communication accounting.

mod belief;
mod classify;
mod comms;
mod dispatch;
mod joint_q;
mod runner;

pub use belief::{
    likelihood, log_likelihood, select_estimate, BeliefVector, EstimationModel, JointEstimate, MapOutcome,
    WindowSchedule,
};
pub use classify::classify_state;
pub use comms::{comms_cost, fit_comms_constant, CommsCost, CommsLedger};
pub use dispatch::{dispatch_update, ensembles, AgentReport, DispatchOutcome, Transition, UpdateRule};
pub use joint_q::JointQTable;
pub use runner::{
    AgentCost, IterationTrace, MmemqConfig, MmemqSystem, ProtocolConfig, ProtocolStats, TrackedPair,
};
