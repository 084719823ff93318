use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::physics::arss_sum;
use super::{
    ActionCodec, AgentAction, AgentState, ArssLevels, ArssNoise, BsLayout, CostModel, GridGeometry, Move, Position,
    Regime, StateCodec, WirelessConfig, INVALID_COST,
};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ActionMask, StateId};

/// Positions, quantized ARSS and coordination flag of all transmitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub positions: Vec<Position>,
    /// Quantized level index of each agent's noisy reading.
    pub levels: Vec<usize>,
    /// Raw noisy readings.
    pub readings: Vec<f64>,
    /// Noiseless ARSS.
    pub true_arss: Vec<f64>,
    /// `true` iff some noiseless ARSS exceeds the threshold.
    pub coordinated: bool,
    pub leader: usize,
}

impl NetworkState {
    pub fn agent_state(&self, i: usize) -> AgentState {
        AgentState {
            position: self.positions[i],
            level: self.levels[i],
        }
    }

    pub fn regime(&self) -> Regime {
        Regime::from_flag(self.coordinated)
    }
}

/// Per-agent result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub costs: Vec<f64>,
    /// `false` where the requested base station did not cover the agent; the
    /// action was rejected and the cost is [`INVALID_COST`].
    pub valid: Vec<bool>,
}

/// The grid network environment.
#[derive(Debug, Clone)]
pub struct WirelessNetwork {
    pub config: WirelessConfig,
    pub geometry: GridGeometry,
    pub layout: BsLayout,
    pub levels: ArssLevels,
    pub noise: ArssNoise,
    pub cost_model: CostModel,
    pub state_codec: StateCodec,
    pub action_codec: ActionCodec,
    powers: Vec<f64>,
    mask: Arc<ActionMask>,
    state: NetworkState,
}

impl WirelessNetwork {
    /// Builds the network and draws collision-free initial positions.
    pub fn new<R: Rng + ?Sized>(config: WirelessConfig, layout: BsLayout, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let geometry = GridGeometry::from_config(&config);
        if config.n_agents > geometry.n_positions() {
            return Err(Error::Config("more agents than lattice points".into()));
        }
        let levels = ArssLevels::from_config(&config);
        let state_codec = StateCodec {
            geometry,
            n_levels: levels.count,
        };
        let action_codec = ActionCodec {
            n_bs: layout.n_stations(),
        };
        let mask = Arc::new(ActionMask::from_fn(
            state_codec.n_states(),
            action_codec.n_actions(),
            |s, a| layout.covers(action_codec.decode(a).bs, state_codec.position_of(s)),
        ));
        let powers = (0..config.n_agents).map(|i| config.power(i)).collect();
        let mut net = Self {
            noise: ArssNoise {
                sigma_c: config.sigma_c,
                sigma_u: config.sigma_u,
            },
            cost_model: CostModel::from_config(&config),
            geometry,
            levels,
            state_codec,
            action_codec,
            powers,
            mask,
            state: NetworkState {
                positions: Vec::new(),
                levels: Vec::new(),
                readings: Vec::new(),
                true_arss: Vec::new(),
                coordinated: false,
                leader: config.leader(),
            },
            layout,
            config,
        };
        net.reset(rng);
        Ok(net)
    }

    /// Redraws distinct initial positions uniformly.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let picks = rand::seq::index::sample(rng, self.geometry.n_positions(), self.config.n_agents);
        let positions: Vec<Position> = picks.iter().map(|i| self.geometry.position_at(i)).collect();
        self.state = self.observe(positions, rng);
    }

    /// Places agents at given positions and draws fresh readings.
    pub fn set_positions<R: Rng + ?Sized>(&mut self, positions: Vec<Position>, rng: &mut R) -> Result<()> {
        if positions.len() != self.config.n_agents || positions.iter().any(|&p| !self.geometry.contains(p)) {
            return Err(Error::Validation("positions do not fit the network".into()));
        }
        self.state = self.observe(positions, rng);
        Ok(())
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn leader(&self) -> usize {
        self.state.leader
    }

    /// Local validity mask shared by all agents.
    pub fn action_mask(&self) -> &Arc<ActionMask> {
        &self.mask
    }

    pub fn local_state_id(&self, i: usize) -> StateId {
        self.state_codec.encode(self.state.agent_state(i))
    }

    pub fn local_state_ids(&self) -> Vec<StateId> {
        (0..self.n_agents()).map(|i| self.local_state_id(i)).collect()
    }

    pub fn is_valid(&self, position: Position, action: ActionId) -> bool {
        self.layout.covers(self.action_codec.decode(action).bs, position)
    }

    /// Noiseless ARSS of every agent for the given positions.
    pub fn arss_profile(&self, positions: &[Position]) -> Vec<f64> {
        (0..positions.len())
            .map(|i| arss_sum(&self.geometry, positions, &self.powers, i, self.cost_model.floor))
            .collect()
    }

    pub fn is_coordinated(&self, arss: &[f64]) -> bool {
        arss.iter().any(|&v| v > self.config.arss_threshold)
    }

    fn observe<R: Rng + ?Sized>(&self, positions: Vec<Position>, rng: &mut R) -> NetworkState {
        let true_arss = self.arss_profile(&positions);
        let coordinated = self.is_coordinated(&true_arss);
        let regime = Regime::from_flag(coordinated);
        let readings: Vec<f64> = true_arss.iter().map(|&v| self.noise.sample(v, regime, rng)).collect();
        let levels = readings.iter().map(|&r| self.levels.quantize(r)).collect();
        NetworkState {
            positions,
            levels,
            readings,
            true_arss,
            coordinated,
            leader: self.state.leader,
        }
    }

    /// Advances all agents by one step.
    ///
    /// Moving agents take a uniform random-walk step (off-grid moves stay);
    /// readings are redrawn at the new positions, and each cost is evaluated
    /// at the agent's post-transition position and quantized ARSS.
    pub fn step<R: Rng + ?Sized>(&mut self, actions: &[ActionId], rng: &mut R) -> Result<StepOutcome> {
        let n = self.n_agents();
        if actions.len() != n {
            return Err(Error::Shape(format!("{} actions for {n} agents", actions.len())));
        }
        let mut decoded: Vec<AgentAction> = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for (i, &a) in actions.iter().enumerate() {
            if a >= self.action_codec.n_actions() {
                return Err(Error::index("action", a, self.action_codec.n_actions()));
            }
            decoded.push(self.action_codec.decode(a));
            valid.push(self.is_valid(self.state.positions[i], a));
        }
        let mut next = self.state.positions.clone();
        for i in 0..n {
            if valid[i] && decoded[i].moving && self.config.is_mobile(i) {
                let m = Move::ALL[rng.random_range(0..Move::ALL.len())];
                next[i] = self.geometry.apply(next[i], m);
            }
        }
        self.state = self.observe(next, rng);
        let mut costs = Vec::with_capacity(n);
        for i in 0..n {
            if !valid[i] {
                costs.push(INVALID_COST);
                continue;
            }
            let d = self.layout.distance_to(decoded[i].bs, self.state.positions[i]);
            let arss = self.levels.value(self.state.levels[i]);
            costs.push(self.cost_model.sample(self.powers[i], d, arss, rng));
        }
        Ok(StepOutcome { costs, valid })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn network(config: WirelessConfig, seed: u64) -> (WirelessNetwork, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = BsLayout::place(&config, &mut rng).unwrap();
        (WirelessNetwork::new(config, layout, &mut rng).unwrap(), rng)
    }

    fn stay_actions(net: &WirelessNetwork) -> Vec<ActionId> {
        (0..net.n_agents())
            .map(|i| {
                let s = net.local_state_id(i);
                net.action_mask().valid_actions(s).into_iter().find(|&a| a < net.action_codec.n_bs).unwrap()
            })
            .collect()
    }

    #[test]
    fn stationary_actions_keep_positions() {
        let (mut net, mut rng) = network(WirelessConfig::default(), 1);
        let before = net.state().positions.clone();
        for _ in 0..50 {
            let a = stay_actions(&net);
            let out = net.step(&a, &mut rng).unwrap();
            assert!(out.valid.iter().all(|&v| v));
        }
        assert_eq!(net.state().positions, before);
    }

    #[test]
    fn invalid_association_is_rejected_with_sentinel() {
        let config = WirelessConfig {
            grid_size: 8.0,
            base_stations: Some(vec![
                crate::wireless::BaseStationSpec { x: 0, y: 0, radius: 100.0 },
                crate::wireless::BaseStationSpec { x: 4, y: 4, radius: 1.0 },
            ]),
            ..WirelessConfig::default()
        };
        let (mut net, mut rng) = network(config, 2);
        net.set_positions(vec![Position::new(0, 0), Position::new(2, 2)], &mut rng).unwrap();
        // agent 0 asks for BS 2, which only covers (4,4)
        let out = net.step(&[3, 0], &mut rng).unwrap();
        assert_eq!(out.valid, vec![false, true]);
        assert_eq!(out.costs[0], INVALID_COST);
        assert_eq!(net.state().positions[0], Position::new(0, 0));
    }

    #[test]
    fn single_agent_moves_are_uniform_over_directions() {
        let config = WirelessConfig {
            n_agents: 2,
            grid_size: 20.0,
            cell_size: 2.0,
            coverage_radius: [40.0, 40.0],
            ..WirelessConfig::default()
        };
        let (mut net, mut rng) = network(config, 5);
        let centre = Position::new(5, 5);
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            net.set_positions(vec![centre, Position::new(0, 0)], &mut rng).unwrap();
            net.step(&[2, 0], &mut rng).unwrap();
            let p = net.state().positions[0];
            let k = match (p.x as i32 - 5, p.y as i32 - 5) {
                (0, 1) => 0,
                (1, 0) => 1,
                (0, -1) => 2,
                (-1, 0) => 3,
                (0, 0) => 4,
                other => panic!("illegal move {other:?}"),
            };
            counts[k] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 4 degrees of freedom, p = 0.01
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn corner_agent_never_leaves_grid() {
        let config = WirelessConfig {
            coverage_radius: [30.0, 30.0],
            ..WirelessConfig::default()
        };
        let (mut net, mut rng) = network(config, 9);
        net.set_positions(vec![Position::new(0, 0), Position::new(7, 7)], &mut rng).unwrap();
        for _ in 0..100_000 {
            net.step(&[2, 2], &mut rng).unwrap();
            for (i, &p) in net.state().positions.iter().enumerate() {
                assert!(net.geometry.contains(p));
                assert!(net.state().levels[i] < net.levels.count);
            }
        }
    }

    #[test]
    fn coordination_flag_tracks_noiseless_arss() {
        let (mut net, mut rng) = network(WirelessConfig::default(), 4);
        net.set_positions(vec![Position::new(0, 0), Position::new(1, 0)], &mut rng).unwrap();
        assert!(net.state().coordinated);
        net.set_positions(vec![Position::new(0, 0), Position::new(7, 7)], &mut rng).unwrap();
        assert!(!net.state().coordinated);
    }
}
