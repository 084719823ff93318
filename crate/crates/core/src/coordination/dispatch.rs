use serde::{Deserialize, Serialize};

use super::{CommsLedger, JointQTable};
use crate::cousins::{CousinSet, SyntheticCost};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, QTable, Sample, StateId};
use crate::wireless::Regime;

/// The four update rules selected by the classes at `t` and `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpdateRule {
    /// Local multi-environment updates; the joint entry returns to the
    /// additive value.
    Local,
    /// Local tables move toward a share of the joint value at the
    /// estimated next joint state.
    LocalFromJoint,
    /// Joint entry moves toward the summed local bootstrap.
    JointFromLocal,
    /// Joint entry moves toward the joint bootstrap.
    Joint,
}

impl UpdateRule {
    pub fn select(prev: Regime, next: Regime) -> Self {
        match (prev, next) {
            (Regime::Uncoordinated, Regime::Uncoordinated) => UpdateRule::Local,
            (Regime::Uncoordinated, Regime::Coordinated) => UpdateRule::LocalFromJoint,
            (Regime::Coordinated, Regime::Uncoordinated) => UpdateRule::JointFromLocal,
            (Regime::Coordinated, Regime::Coordinated) => UpdateRule::Joint,
        }
    }

    pub fn touches_local(self) -> bool {
        matches!(self, UpdateRule::Local | UpdateRule::LocalFromJoint)
    }

    pub fn touches_joint(self) -> bool {
        !matches!(self, UpdateRule::LocalFromJoint)
    }

    pub fn label(self) -> &'static str {
        match self {
            UpdateRule::Local => "U->U",
            UpdateRule::LocalFromJoint => "U->C",
            UpdateRule::JointFromLocal => "C->U",
            UpdateRule::Joint => "C->C",
        }
    }
}

/// What an agent sends the leader after a coordinated step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentReport {
    pub agent: usize,
    pub cost: f64,
    /// `min_a' Q_i^e(s_i', a')`, required when the next state is
    /// uncoordinated.
    pub next_min: Option<f64>,
}

/// One joint transition as seen by the dispatcher.
#[derive(Debug, Clone)]
pub struct Transition<'a> {
    pub t: u64,
    pub prev: Regime,
    pub next: Regime,
    pub states: &'a [StateId],
    pub actions: &'a [ActionId],
    pub costs: &'a [f64],
    pub next_states: &'a [StateId],
    /// Joint state used for the joint entry: the true one when
    /// uncoordinated, the leader-selected estimate when coordinated.
    pub joint_state: u64,
    pub joint_action: u64,
    /// Leader-selected estimate of the next joint state, when coordinated.
    pub next_joint_state: Option<u64>,
    /// One report per agent in coordinated steps.
    pub reports: &'a [Option<AgentReport>],
}

/// Which tables one dispatch wrote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchOutcome {
    pub rule: UpdateRule,
    pub local_writes: usize,
    pub joint_writes: usize,
}

/// Applies exactly one of the four update rules.
pub fn dispatch_update(
    sets: &mut [CousinSet],
    joint: &mut JointQTable,
    costs_models: &[&dyn SyntheticCost],
    transition: &Transition<'_>,
    alpha: f64,
    comms: &mut CommsLedger,
) -> Result<DispatchOutcome> {
    let n = sets.len();
    if [transition.states.len(), transition.actions.len(), transition.costs.len(), transition.next_states.len()]
        .iter()
        .any(|&len| len != n)
        || costs_models.len() != n
    {
        return Err(Error::Shape("transition arity differs from agent count".into()));
    }
    let rule = UpdateRule::select(transition.prev, transition.next);
    let gamma = joint.gamma();
    let sample = |i: usize| {
        Sample::new(
            transition.states[i],
            transition.actions[i],
            transition.next_states[i],
            transition.costs[i],
        )
    };
    let (local_writes, joint_writes) = match rule {
        UpdateRule::Local => {
            for (i, set) in sets.iter_mut().enumerate() {
                set.learn(&sample(i), transition.t, costs_models[i])?;
            }
            joint.reset_to_additive(transition.joint_state, transition.joint_action);
            (n, 1)
        }
        UpdateRule::LocalFromJoint => {
            let next = transition
                .next_joint_state
                .ok_or_else(|| Error::Protocol("coordinated next state without a joint estimate".into()))?;
            let best = {
                let locals = ensembles(sets);
                joint.min_value(&locals, next)?
            };
            comms.send_from_leader(n as u64, n as u64);
            for (i, set) in sets.iter_mut().enumerate() {
                let target = transition.costs[i] + gamma / n as f64 * best;
                set.learn_toward(transition.states[i], transition.actions[i], target, transition.t)?;
            }
            (n, 0)
        }
        UpdateRule::JointFromLocal => {
            let reports = collect_reports(transition.reports, n)?;
            let mut target = 0.0;
            for r in &reports {
                let next_min = r
                    .next_min
                    .ok_or_else(|| Error::Protocol(format!("agent {} omitted its local bootstrap", r.agent)))?;
                target += r.cost + gamma * next_min;
            }
            comms.send_to_leader(n as u64, 2 * n as u64);
            let locals = ensembles(sets);
            joint.blend_toward(&locals, transition.joint_state, transition.joint_action, target, alpha)?;
            (0, 1)
        }
        UpdateRule::Joint => {
            let reports = collect_reports(transition.reports, n)?;
            let next = transition
                .next_joint_state
                .ok_or_else(|| Error::Protocol("coordinated next state without a joint estimate".into()))?;
            comms.send_to_leader(n as u64, n as u64);
            let locals = ensembles(sets);
            let target = reports.iter().map(|r| r.cost).sum::<f64>() + gamma * joint.min_value(&locals, next)?;
            joint.blend_toward(&locals, transition.joint_state, transition.joint_action, target, alpha)?;
            (0, 1)
        }
    };
    Ok(DispatchOutcome {
        rule,
        local_writes,
        joint_writes,
    })
}

/// The agents' ensemble tables, in agent order.
pub fn ensembles(sets: &[CousinSet]) -> Vec<&QTable> {
    sets.iter().map(CousinSet::ensemble).collect()
}

fn collect_reports(reports: &[Option<AgentReport>], n: usize) -> Result<Vec<AgentReport>> {
    if reports.len() != n {
        return Err(Error::Protocol(format!("expected {n} agent reports, got {}", reports.len())));
    }
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::Protocol(format!("missing report from agent {i}"))))
        .collect()
}
