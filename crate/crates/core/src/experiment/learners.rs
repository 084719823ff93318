use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::JointOracle;
use crate::coordination::{ensembles, MmemqSystem, ProtocolStats};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, HystereticRates, QLearner, QTable, Sample, Schedules, StateId};
use crate::rng::{SeedStreams, StreamRng};
use crate::wireless::{JointCodec, WirelessNetwork};

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: u64,
    /// True joint state before the step.
    pub joint_state: u64,
    /// Regime the learner acted under (detected for M-MEMQ, true otherwise).
    pub coordinated: bool,
    pub actions: Vec<ActionId>,
    pub costs: Vec<f64>,
    /// Communication units spent in this iteration.
    pub comms: u64,
}

/// Learning iteration of environment step `t` (both 1-based).
pub fn schedule_index(t: u64, trajectory_length: u64) -> u64 {
    (t.max(1) - 1) / trajectory_length + 1
}

/// Common driver interface of M-MEMQ and the baselines.
pub trait JointLearner {
    /// One environment step.
    fn step(&mut self) -> Result<StepLog>;
    /// Environment steps taken so far.
    fn steps(&self) -> u64;
    /// Learned joint value `Q_bar(s, a)`.
    fn value(&self, s: u64, a: u64) -> f64;
    /// Learned values at every valid oracle entry.
    fn oracle_values(&self, oracle: &JointOracle) -> Vec<f64> {
        oracle.collect_values(|s, a| self.value(s, a))
    }
    fn greedy(&self, s: u64) -> Result<u64>;
    fn comms_payload(&self) -> u64;
    /// End-of-run bookkeeping (final uploads).
    fn finish(&mut self) {}
    fn protocol_stats(&self) -> Option<ProtocolStats> {
        None
    }
}

pub struct MmemqLearner {
    pub system: MmemqSystem,
}

impl MmemqLearner {
    pub fn new(mut system: MmemqSystem) -> Self {
        system.enable_trace();
        Self { system }
    }
}

impl JointLearner for MmemqLearner {
    fn step(&mut self) -> Result<StepLog> {
        self.system.step()?;
        let tr = self
            .system
            .drain_trace()
            .pop()
            .ok_or_else(|| Error::Protocol("iteration left no trace".into()))?;
        Ok(StepLog {
            t: tr.t,
            joint_state: tr.joint_state,
            coordinated: tr.class.is_coordinated(),
            actions: tr.actions,
            costs: tr.costs,
            comms: tr.payload,
        })
    }

    fn steps(&self) -> u64 {
        self.system.steps()
    }

    fn value(&self, s: u64, a: u64) -> f64 {
        self.system.joint_value(s, a)
    }

    fn oracle_values(&self, oracle: &JointOracle) -> Vec<f64> {
        let locals = ensembles(self.system.sets());
        let joint = self.system.joint();
        oracle.collect_values(|s, a| joint.get(&locals, s, a))
    }

    fn greedy(&self, s: u64) -> Result<u64> {
        self.system.greedy_joint_action(s)
    }

    fn comms_payload(&self) -> u64 {
        self.system.comms().payload
    }

    fn finish(&mut self) {
        self.system.finish();
    }

    fn protocol_stats(&self) -> Option<ProtocolStats> {
        Some(self.system.stats().clone())
    }
}

/// Per-agent learners without communication; `Q_bar` is the sum of the
/// local tables.
pub struct IndependentLearners {
    network: WirelessNetwork,
    learners: Vec<QLearner>,
    states: JointCodec,
    actions: JointCodec,
    trajectory_length: u64,
    t: u64,
    env_rng: StreamRng,
    act_rng: StreamRng,
}

impl IndependentLearners {
    /// Plain independent learners, or hysteretic ones when `rates` is given.
    pub fn new(
        network: WirelessNetwork,
        gamma: f64,
        trajectory_length: u64,
        schedules: Schedules,
        rates: Option<HystereticRates>,
        streams: &SeedStreams,
    ) -> Result<Self> {
        if trajectory_length == 0 {
            return Err(Error::Config("trajectory length must be positive".into()));
        }
        let n = network.n_agents();
        let n_s = network.state_codec.n_states();
        let n_a = network.action_codec.n_actions();
        let mut learners = Vec::with_capacity(n);
        for _ in 0..n {
            let table = QTable::zeros(n_s, n_a, gamma)?.with_mask(network.action_mask().clone())?;
            let mut learner = QLearner::new(table, schedules);
            if let Some(r) = rates {
                learner = learner.hysteretic(r);
            }
            learners.push(learner);
        }
        Ok(Self {
            states: JointCodec::uniform(n_s, n)?,
            actions: JointCodec::uniform(n_a, n)?,
            network,
            learners,
            trajectory_length,
            t: 0,
            env_rng: streams.stream("env"),
            act_rng: streams.stream("act"),
        })
    }

    pub fn tables(&self) -> Vec<&QTable> {
        self.learners.iter().map(|l| &l.table).collect()
    }
}

impl JointLearner for IndependentLearners {
    fn step(&mut self) -> Result<StepLog> {
        self.t += 1;
        let t = self.t;
        let k = schedule_index(t, self.trajectory_length);
        let states = self.network.local_state_ids();
        let coordinated = self.network.state().coordinated;
        let mut actions = Vec::with_capacity(states.len());
        for (learner, &s) in self.learners.iter().zip(&states) {
            actions.push(learner.act(s, k, &mut self.act_rng)?);
        }
        let outcome = self.network.step(&actions, &mut self.env_rng)?;
        let next = self.network.local_state_ids();
        for (i, learner) in self.learners.iter_mut().enumerate() {
            learner.learn(&Sample::new(states[i], actions[i], next[i], outcome.costs[i]), k)?;
        }
        Ok(StepLog {
            t,
            joint_state: self.states.encode(&states),
            coordinated,
            actions,
            costs: outcome.costs,
            comms: 0,
        })
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn value(&self, s: u64, a: u64) -> f64 {
        self.learners
            .iter()
            .enumerate()
            .map(|(i, l)| l.table.get(self.states.component(s, i), self.actions.component(a, i)))
            .sum()
    }

    fn greedy(&self, s: u64) -> Result<u64> {
        let mut parts = Vec::with_capacity(self.learners.len());
        for (i, l) in self.learners.iter().enumerate() {
            let si = self.states.component(s, i);
            parts.push(l.table.argmin(si).ok_or(Error::NoValidAction { state: si })?);
        }
        Ok(self.actions.encode(&parts))
    }

    fn comms_payload(&self) -> u64 {
        0
    }
}

/// One Q-learner over joint states and joint actions with full observation.
///
/// Rows are allocated on first visit and start at zero; invalid joint
/// actions (some component's base station does not cover its agent) are
/// excluded from every minimum.
pub struct CentralizedLearner {
    network: WirelessNetwork,
    gamma: f64,
    trajectory_length: u64,
    schedules: Schedules,
    states: JointCodec,
    actions: JointCodec,
    rows: HashMap<u64, Vec<f64>>,
    t: u64,
    env_rng: StreamRng,
    act_rng: StreamRng,
}

impl CentralizedLearner {
    pub fn new(
        network: WirelessNetwork,
        gamma: f64,
        trajectory_length: u64,
        schedules: Schedules,
        streams: &SeedStreams,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("discount {gamma} not in [0,1)")));
        }
        if trajectory_length == 0 {
            return Err(Error::Config("trajectory length must be positive".into()));
        }
        let n = network.n_agents();
        Ok(Self {
            states: JointCodec::uniform(network.state_codec.n_states(), n)?,
            actions: JointCodec::uniform(network.action_codec.n_actions(), n)?,
            network,
            gamma,
            trajectory_length,
            schedules,
            rows: HashMap::new(),
            t: 0,
            env_rng: streams.stream("env"),
            act_rng: streams.stream("act"),
        })
    }

    pub fn n_visited(&self) -> usize {
        self.rows.len()
    }

    fn is_valid(&self, s: u64, a: u64) -> bool {
        let mask = self.network.action_mask();
        (0..self.states.arity()).all(|i| mask.is_valid(self.states.component(s, i), self.actions.component(a, i)))
    }

    fn valid_actions(&self, s: u64) -> Vec<u64> {
        (0..self.actions.size()).filter(|&a| self.is_valid(s, a)).collect()
    }

    fn best(&self, s: u64) -> Option<(u64, f64)> {
        let row = self.rows.get(&s);
        let mut best: Option<(u64, f64)> = None;
        for a in self.valid_actions(s) {
            let v = row.map_or(0.0, |r| r[a as usize]);
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((a, v));
            }
        }
        best
    }
}

impl JointLearner for CentralizedLearner {
    fn step(&mut self) -> Result<StepLog> {
        self.t += 1;
        let t = self.t;
        let k = schedule_index(t, self.trajectory_length);
        let local: Vec<StateId> = self.network.local_state_ids();
        let s = self.states.encode(&local);
        let coordinated = self.network.state().coordinated;
        let zeta = self.schedules.exploration.at(k);
        let a = if zeta > 0.0 && self.act_rng.random::<f64>() < zeta {
            let valid = self.valid_actions(s);
            if valid.is_empty() {
                return Err(Error::NoValidAction { state: s as usize });
            }
            valid[self.act_rng.random_range(0..valid.len())]
        } else {
            self.best(s).ok_or(Error::NoValidAction { state: s as usize })?.0
        };
        let actions = self.actions.decode(a);
        let outcome = self.network.step(&actions, &mut self.env_rng)?;
        let next = self.states.encode(&self.network.local_state_ids());
        let cost: f64 = outcome.costs.iter().sum();
        let next_min = self.best(next).ok_or(Error::NoValidAction { state: next as usize })?.1;
        let target = cost + self.gamma * next_min;
        let alpha = self.schedules.learning_rate.at(k);
        let n_ja = self.actions.size() as usize;
        let row = self.rows.entry(s).or_insert_with(|| vec![0.0; n_ja]);
        let old = row[a as usize];
        row[a as usize] = (1.0 - alpha) * old + alpha * target;
        Ok(StepLog {
            t,
            joint_state: s,
            coordinated,
            actions,
            costs: outcome.costs,
            comms: 0,
        })
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn value(&self, s: u64, a: u64) -> f64 {
        self.rows.get(&s).map_or(0.0, |r| r[a as usize])
    }

    fn greedy(&self, s: u64) -> Result<u64> {
        self.best(s).map(|(a, _)| a).ok_or(Error::NoValidAction { state: s as usize })
    }

    fn comms_payload(&self) -> u64 {
        0
    }
}
