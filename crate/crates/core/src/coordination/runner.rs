use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dispatch::{dispatch_update, ensembles, AgentReport, Transition, UpdateRule};
use super::{classify_state, BeliefVector, CommsLedger, EstimationModel, JointEstimate, JointQTable, WindowSchedule};
use crate::cousins::{CousinSet, MemqConfig, SyntheticCost};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, Schedules, StateId};
use crate::rng::{SeedStreams, StreamRng};
use crate::wireless::{
    ActionCodec, ArssLevels, BsLayout, CostModel, JointCodec, Position, Regime, StateCodec, WirelessNetwork,
    INVALID_COST,
};

/// Local cost model of one agent, used for synthetic transitions.
#[derive(Debug, Clone)]
pub struct AgentCost {
    pub power: f64,
    pub layout: BsLayout,
    pub cost_model: CostModel,
    pub levels: ArssLevels,
    pub states: StateCodec,
    pub actions: ActionCodec,
}

impl AgentCost {
    pub fn for_agent(network: &WirelessNetwork, agent: usize) -> Self {
        Self {
            power: network.powers()[agent],
            layout: network.layout.clone(),
            cost_model: network.cost_model,
            levels: network.levels,
            states: network.state_codec,
            actions: network.action_codec,
        }
    }
}

impl SyntheticCost for AgentCost {
    fn synthetic_cost(&self, s: StateId, a: ActionId, next: StateId) -> f64 {
        let action = self.actions.decode(a);
        if !self.layout.covers(action.bs, self.states.position_of(s)) {
            return INVALID_COST;
        }
        let after = self.states.decode(next);
        let d = self.layout.distance_to(action.bs, after.position);
        self.cost_model.evaluate(self.power, d, self.levels.value(after.level), 0.0)
    }
}

/// Belief and estimation protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Belief reset period `l`.
    pub period: u64,
    /// Initial window radius; defaults to two lattice spacings.
    pub delta0: Option<f64>,
    /// Largest belief support an agent may enumerate.
    pub support_cap: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            period: 30,
            delta0: None,
            support_cap: 250_000,
        }
    }
}

/// Learner configuration shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmemqConfig {
    pub gamma: f64,
    /// Environment steps per learning iteration `l`; the schedules advance
    /// once per iteration.
    pub trajectory_length: u64,
    pub schedules: Schedules,
    /// Template for every agent's cousin set; `orders` is replaced per agent.
    pub memq: MemqConfig,
    /// Cousin orders (besides the real environment), assigned to agents
    /// round-robin.
    pub cousin_orders: Vec<Vec<u32>>,
    pub protocol: ProtocolConfig,
}

impl Default for MmemqConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            trajectory_length: 30,
            schedules: Schedules::default(),
            memq: MemqConfig::default(),
            cousin_orders: vec![vec![2], vec![3], vec![5]],
            protocol: ProtocolConfig::default(),
        }
    }
}

impl MmemqConfig {
    pub fn orders_for(&self, agent: usize) -> Vec<u32> {
        let mut orders = vec![1];
        if !self.cousin_orders.is_empty() {
            orders.extend(self.cousin_orders[agent % self.cousin_orders.len()].iter().filter(|&&n| n != 1));
        }
        orders
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} not in [0,1)", self.gamma)));
        }
        if self.trajectory_length == 0 {
            return Err(Error::Config("trajectory length must be positive".into()));
        }
        if self.protocol.period == 0 {
            return Err(Error::Config("belief reset period must be positive".into()));
        }
        if self.protocol.delta0.is_some_and(|d| !(d >= 0.0)) {
            return Err(Error::Config("initial window radius must be non-negative".into()));
        }
        self.schedules.validate()?;
        self.memq.validate()
    }
}

/// A joint entry whose leader value is recorded at the end of every
/// iteration (trajectory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedPair {
    pub joint_state: u64,
    pub joint_action: u64,
    /// `Q_bar` when tracking started.
    pub initial: f64,
    /// `Q_bar` after each iteration.
    pub values: Vec<f64>,
    /// Per iteration, agent and environment order: the unweighted local
    /// value at the pair's local components.
    pub locals: Vec<Vec<Vec<f64>>>,
    /// Per agent and environment order: largest `|w_t Q_t - w_{t-1} Q_{t-1}|`
    /// over iterations, at the pair's local components.
    pub theta: Vec<Vec<f64>>,
}

/// Tracked values at one instant: `Q_bar`, then per agent and order the
/// weighted and the raw local values.
type TrackedValues = Vec<(f64, Vec<Vec<(f64, f64)>>)>;

/// Counters accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStats {
    pub iterations: u64,
    pub coordinated_steps: u64,
    pub rule_counts: [u64; 4],
    pub estimates: u64,
    pub correct_estimates: u64,
    pub fallbacks: u64,
}

/// One iteration's protocol trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub t: u64,
    /// True joint state before the step.
    pub joint_state: u64,
    pub class: Regime,
    pub actions: Vec<ActionId>,
    pub costs: Vec<f64>,
    pub rule: UpdateRule,
    pub estimate: Option<Vec<StateId>>,
    pub confidence: Option<f64>,
    pub payload: u64,
}

/// The full multi-agent learner driving a wireless network.
#[derive(Debug, Clone)]
pub struct MmemqSystem {
    network: WirelessNetwork,
    config: MmemqConfig,
    sets: Vec<CousinSet>,
    costs: Vec<AgentCost>,
    joint: JointQTable,
    states: JointCodec,
    actions: JointCodec,
    beliefs: Vec<BeliefVector>,
    last_estimates: Vec<Vec<Position>>,
    model: EstimationModel,
    window: WindowSchedule,
    comms: CommsLedger,
    class: Regime,
    estimate: Option<JointEstimate>,
    t: u64,
    env_rng: StreamRng,
    act_rng: StreamRng,
    tracked: Vec<TrackedPair>,
    tracked_start: Option<TrackedValues>,
    stats: ProtocolStats,
    trace: Option<Vec<IterationTrace>>,
}

impl MmemqSystem {
    pub fn new(network: WirelessNetwork, config: MmemqConfig, streams: &SeedStreams) -> Result<Self> {
        config.validate()?;
        let n = network.n_agents();
        if n < 2 {
            return Err(Error::Config("the multi-agent learner needs at least two agents".into()));
        }
        let n_s = network.state_codec.n_states();
        let n_a = network.action_codec.n_actions();
        let mut init = streams.stream("init");
        let mut sets = Vec::with_capacity(n);
        for i in 0..n {
            let memq = config.memq.clone().with_orders(config.orders_for(i));
            sets.push(CousinSet::new(
                n_s,
                n_a,
                config.gamma,
                Some(network.action_mask().clone()),
                memq,
                config.schedules,
                &mut init,
                streams.indexed("model", i),
            )?);
        }
        let states = JointCodec::uniform(n_s, n)?;
        let actions = JointCodec::uniform(n_a, n)?;
        let joint = JointQTable::new(states.clone(), actions.clone(), config.gamma)?;
        let cell = network.geometry.cell_size;
        let window = WindowSchedule {
            delta0: config.protocol.delta0.unwrap_or(2.0 * cell),
            cell_size: cell,
            period: config.protocol.period,
        };
        let model = EstimationModel {
            geometry: network.geometry,
            powers: network.powers().to_vec(),
            floor: network.cost_model.floor,
            sigma: network.noise.sigma_c,
            levels: network.levels,
            codec: network.state_codec,
        };
        let positions = network.state().positions.clone();
        let mut beliefs = Vec::with_capacity(n);
        let mut last_estimates = Vec::with_capacity(n);
        for i in 0..n {
            let centers: Vec<Position> = (0..n).filter(|&j| j != i).map(|j| positions[j]).collect();
            beliefs.push(BeliefVector::new(
                i,
                n,
                centers.clone(),
                window.radius(1),
                &network.geometry,
                config.protocol.support_cap,
            )?);
            last_estimates.push(centers);
        }
        let costs = (0..n).map(|i| AgentCost::for_agent(&network, i)).collect();
        let mut sys = Self {
            class: Regime::Uncoordinated,
            estimate: None,
            network,
            config,
            sets,
            costs,
            joint,
            states,
            actions,
            beliefs,
            last_estimates,
            model,
            window,
            comms: CommsLedger::new(false),
            t: 0,
            env_rng: streams.stream("env"),
            act_rng: streams.stream("act"),
            tracked: Vec::new(),
            tracked_start: None,
            stats: ProtocolStats::default(),
            trace: None,
        };
        sys.observe(1)?;
        Ok(sys)
    }

    /// Keeps a per-iteration protocol trace.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn track(&mut self, joint_state: u64, joint_action: u64) {
        let theta = self.sets.iter().map(|s| vec![0.0; s.orders().len()]).collect();
        let initial = self.joint_value(joint_state, joint_action);
        self.tracked.push(TrackedPair {
            joint_state,
            joint_action,
            initial,
            values: Vec::new(),
            locals: Vec::new(),
            theta,
        });
    }

    pub fn network(&self) -> &WirelessNetwork {
        &self.network
    }

    pub fn config(&self) -> &MmemqConfig {
        &self.config
    }

    pub fn sets(&self) -> &[CousinSet] {
        &self.sets
    }

    pub fn joint(&self) -> &JointQTable {
        &self.joint
    }

    pub fn joint_states(&self) -> &JointCodec {
        &self.states
    }

    pub fn joint_actions(&self) -> &JointCodec {
        &self.actions
    }

    pub fn comms(&self) -> &CommsLedger {
        &self.comms
    }

    pub fn stats(&self) -> &ProtocolStats {
        &self.stats
    }

    pub fn tracked(&self) -> &[TrackedPair] {
        &self.tracked
    }

    pub fn trace(&self) -> Option<&[IterationTrace]> {
        self.trace.as_deref()
    }

    /// Removes and returns the trace recorded so far.
    pub fn drain_trace(&mut self) -> Vec<IterationTrace> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Environment steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Learning iteration of step `t` (1-based): `ceil(t / l)`.
    pub fn schedule_index(&self, t: u64) -> u64 {
        (t.max(1) - 1) / self.config.trajectory_length + 1
    }

    pub fn beliefs(&self) -> &[BeliefVector] {
        &self.beliefs
    }

    /// Leader value of a joint entry.
    pub fn joint_value(&self, s: u64, a: u64) -> f64 {
        self.joint.get(&ensembles(&self.sets), s, a)
    }

    /// Greedy valid joint action of the leader's table.
    pub fn greedy_joint_action(&self, s: u64) -> Result<u64> {
        Ok(self.joint.argmin(&ensembles(&self.sets), s)?.0)
    }

    pub fn run_steps(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Runs `iterations` trajectories of `trajectory_length` steps.
    pub fn run_iterations(&mut self, iterations: u64) -> Result<()> {
        self.run_steps(iterations * self.config.trajectory_length)
    }

    /// Uploads the local ensemble tables to the leader, which completes the
    /// additive part of the joint table. Charged once per run.
    pub fn finish(&mut self) {
        let n = self.sets.len() as u64;
        let entries = (self.network.state_codec.n_states() * self.network.action_codec.n_actions()) as u64;
        self.comms.send_to_leader(n, n * entries);
        self.comms.end_iteration();
    }

    /// One environment step of the protocol.
    pub fn step(&mut self) -> Result<()> {
        self.t += 1;
        let t = self.t;
        let k = self.schedule_index(t);
        let n = self.sets.len();
        let payload_before = self.comms.payload;
        // Classification: every agent reports its flag, the leader broadcasts
        // the consensus.
        self.comms.send_to_leader(n as u64, n as u64);
        self.comms.send_from_leader(n as u64, n as u64);

        let states: Vec<StateId> = self.network.local_state_ids();
        let class = self.class;
        let estimate = self.estimate.take();
        let zeta = self.config.schedules.exploration.at(k);
        let mut actions = Vec::with_capacity(n);
        let joint_state = match (&estimate, class) {
            (Some(est), Regime::Coordinated) => {
                self.comms.send_to_leader(n as u64, 2 * n as u64);
                let s_hat = self.states.encode(&est.local_states);
                let (leader_action, _) = self.joint.argmin(&ensembles(&self.sets), s_hat)?;
                self.comms.send_from_leader(n as u64, n as u64);
                for (i, &s) in states.iter().enumerate() {
                    let table = self.sets[i].ensemble();
                    let valid = table.valid_actions(s);
                    if valid.is_empty() {
                        return Err(Error::NoValidAction { state: s });
                    }
                    let a = if zeta > 0.0 && self.act_rng.random::<f64>() < zeta {
                        valid[self.act_rng.random_range(0..valid.len())]
                    } else {
                        let proposed = self.actions.component(leader_action, i);
                        if table.is_valid(s, proposed) {
                            proposed
                        } else {
                            table.argmin(s).ok_or(Error::NoValidAction { state: s })?
                        }
                    };
                    actions.push(a);
                }
                s_hat
            }
            (None, Regime::Uncoordinated) => {
                for (i, &s) in states.iter().enumerate() {
                    actions.push(self.sets[i].act(s, t, &mut self.act_rng)?);
                }
                self.states.encode(&states)
            }
            _ => return Err(Error::Protocol("coordinated state without a joint estimate".into())),
        };
        let joint_action = self.actions.encode(&actions);
        let l = self.config.trajectory_length;
        if (t - 1).is_multiple_of(l) && !self.tracked.is_empty() {
            self.tracked_start = Some(self.tracked_snapshot());
        }

        let outcome = self.network.step(&actions, &mut self.env_rng)?;
        let next_states = self.network.local_state_ids();
        self.observe(t + 1)?;

        for i in 0..n {
            self.sets[i].record(crate::mdp::Sample::new(states[i], actions[i], next_states[i], outcome.costs[i]))?;
        }
        let reports: Vec<Option<AgentReport>> = if class == Regime::Coordinated {
            (0..n)
                .map(|i| {
                    Some(AgentReport {
                        agent: i,
                        cost: outcome.costs[i],
                        next_min: Some(self.sets[i].ensemble().min_value(next_states[i])),
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        let next_joint_state = self.estimate.as_ref().map(|e| self.states.encode(&e.local_states));
        let transition = Transition {
            t: k,
            prev: class,
            next: self.class,
            states: &states,
            actions: &actions,
            costs: &outcome.costs,
            next_states: &next_states,
            joint_state,
            joint_action,
            next_joint_state,
            reports: &reports,
        };
        let cost_refs: Vec<&dyn SyntheticCost> = self.costs.iter().map(|c| c as &dyn SyntheticCost).collect();
        let alpha = self.config.schedules.learning_rate.at(k);
        let done = dispatch_update(&mut self.sets, &mut self.joint, &cost_refs, &transition, alpha, &mut self.comms)?;

        self.stats.iterations += 1;
        if class == Regime::Coordinated {
            self.stats.coordinated_steps += 1;
        }
        self.stats.rule_counts[done.rule as usize] += 1;
        if t.is_multiple_of(l) {
            self.update_tracked();
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(IterationTrace {
                t,
                joint_state: self.states.encode(&states),
                class,
                actions: actions.clone(),
                costs: outcome.costs.clone(),
                rule: done.rule,
                estimate: estimate.as_ref().map(|e| e.local_states.clone()),
                confidence: estimate.as_ref().map(|e| e.confidence),
                payload: self.comms.payload - payload_before,
            });
        }
        self.comms.end_iteration();
        Ok(())
    }

    /// Advances the belief windows to iteration `t`, classifies the current
    /// network state and, when coordinated, has every agent estimate the
    /// joint state and the leader select the most confident estimate.
    fn observe(&mut self, t: u64) -> Result<()> {
        let geometry = &self.network.geometry;
        if self.window.is_reset(t) {
            for (i, belief) in self.beliefs.iter_mut().enumerate() {
                belief.reset(self.last_estimates[i].clone(), self.window.radius(t), geometry)?;
            }
        } else {
            for belief in &mut self.beliefs {
                belief.grow(self.window.radius(t), geometry)?;
            }
        }
        let state = self.network.state().clone();
        self.class = classify_state(&state.readings, self.network.config.arss_threshold);
        self.estimate = None;
        if self.class == Regime::Coordinated {
            let mut estimates = Vec::with_capacity(self.beliefs.len());
            for (i, belief) in self.beliefs.iter_mut().enumerate() {
                let out = belief.map_estimate(state.readings[i], state.positions[i], &self.model);
                if out.fallback {
                    self.stats.fallbacks += 1;
                }
                self.last_estimates[i] = out.positions.clone();
                estimates.push(JointEstimate::assemble(i, state.agent_state(i), &out, &self.model, t));
            }
            let chosen = super::select_estimate(&estimates).expect("at least two agents").clone();
            self.stats.estimates += 1;
            let correct = chosen
                .local_states
                .iter()
                .zip(&state.positions)
                .all(|(&s, &p)| self.model.codec.position_of(s) == p);
            if correct {
                self.stats.correct_estimates += 1;
            }
            self.estimate = Some(chosen);
        }
        Ok(())
    }

    fn tracked_snapshot(&self) -> TrackedValues {
        self.tracked
            .iter()
            .map(|p| {
                let locals = self
                    .sets
                    .iter()
                    .enumerate()
                    .map(|(i, set)| {
                        let s = self.states.component(p.joint_state, i);
                        let a = self.actions.component(p.joint_action, i);
                        set.tables()
                            .iter()
                            .zip(set.weights())
                            .map(|(q, w)| (w * q.get(s, a), q.get(s, a)))
                            .collect()
                    })
                    .collect();
                (self.joint_value(p.joint_state, p.joint_action), locals)
            })
            .collect()
    }

    fn update_tracked(&mut self) {
        let Some(before) = self.tracked_start.take() else {
            return;
        };
        let after = self.tracked_snapshot();
        for (pair, ((_, old), (value, new))) in self.tracked.iter_mut().zip(before.into_iter().zip(after)) {
            pair.values.push(value);
            for (theta_i, (old_i, new_i)) in pair.theta.iter_mut().zip(old.iter().zip(&new)) {
                for (th, (o, n)) in theta_i.iter_mut().zip(old_i.iter().zip(new_i)) {
                    *th = th.max((n.0 - o.0).abs());
                }
            }
            pair.locals.push(new.iter().map(|agent| agent.iter().map(|v| v.1).collect()).collect());
        }
    }
}
