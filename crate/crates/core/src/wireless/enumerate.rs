//! Exact kernels for desk-scale instances, used as oracles.

use std::collections::HashMap;
use std::sync::Arc;

use super::physics::arss_sum;
use super::{ActionCodec, ArssLevels, ArssNoise, BsLayout, CostModel, GridGeometry, JointCodec, Position, Regime, StateCodec, WirelessConfig};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ActionMask, QTable, StateId, TransitionModel, TransitionTensor, ValueIteration};

/// Level probabilities below this are dropped from joint enumeration.
pub const LEVEL_EPS: f64 = 1e-12;

/// Cap on the number of other-agent position configurations marginalized by
/// the per-agent oracle.
pub const OTHER_CONFIG_CAP: usize = 300_000;

struct Ingredients {
    geometry: GridGeometry,
    levels: ArssLevels,
    noise: ArssNoise,
    cost: CostModel,
    powers: Vec<f64>,
    actions: ActionCodec,
}

impl Ingredients {
    fn new(config: &WirelessConfig, layout: &BsLayout) -> Result<Self> {
        config.validate()?;
        if config.cost_noise_std != 0.0 {
            return Err(Error::Precondition("enumeration needs cost_noise_std = 0".into()));
        }
        Ok(Self {
            geometry: GridGeometry::from_config(config),
            levels: ArssLevels::from_config(config),
            noise: ArssNoise {
                sigma_c: config.sigma_c,
                sigma_u: config.sigma_u,
            },
            cost: CostModel::from_config(config),
            powers: (0..config.n_agents).map(|i| config.power(i)).collect(),
            actions: ActionCodec {
                n_bs: layout.n_stations(),
            },
        })
    }

    /// Level distributions of every agent at the given positions.
    fn level_profile(&self, positions: &[Position], threshold: f64) -> Vec<Vec<f64>> {
        let n = positions.len();
        let arss: Vec<f64> = (0..n)
            .map(|i| arss_sum(&self.geometry, positions, &self.powers, i, self.cost.floor))
            .collect();
        let regime = Regime::from_flag(arss.iter().any(|&v| v > threshold));
        let std = self.noise.std(regime);
        arss.iter().map(|&v| self.levels.level_distribution(v, std)).collect()
    }

    fn next_positions(&self, p: Position, moving: bool) -> Vec<(Position, f64)> {
        if moving {
            self.geometry.walk_distribution(p)
        } else {
            vec![(p, 1.0)]
        }
    }

    /// `cost[(pos * n_bs + b - 1) * n_levels + level]` for one agent.
    fn cost_table(&self, agent: usize, layout: &BsLayout) -> Vec<f64> {
        let n_bs = layout.n_stations();
        let mut out = Vec::with_capacity(self.geometry.n_positions() * n_bs * self.levels.count);
        for p in self.geometry.positions() {
            for b in 1..=n_bs {
                let d = layout.distance_to(b, p);
                for l in 0..self.levels.count {
                    out.push(self.cost.evaluate(self.powers[agent], d, self.levels.value(l), 0.0));
                }
            }
        }
        out
    }
}

fn cost_at(table: &[f64], geometry: &GridGeometry, n_bs: usize, n_levels: usize, p: Position, b: usize, level: usize) -> f64 {
    table[(geometry.position_index(p) * n_bs + b - 1) * n_levels + level]
}

/// The individual MDP one agent faces when the others perform uniform random
/// walks and, given the agent's own state, are distributed over positions in
/// proportion to how likely they make the observed ARSS level.
#[derive(Debug, Clone)]
pub struct AgentMdp {
    pub agent: usize,
    pub codec: StateCodec,
    pub actions: ActionCodec,
    pub kernel: TransitionTensor,
    /// Expected post-transition cost, `[s * n_actions + a]`; zero on invalid
    /// actions.
    pub costs: Vec<f64>,
    pub mask: Arc<ActionMask>,
}

impl AgentMdp {
    pub fn solve(&self, gamma: f64, tol: f64) -> Result<QTable> {
        ValueIteration::new(gamma, tol)
            .with_mask(self.mask.clone())
            .solve(&self.kernel, &self.costs)
            .map(|(q, _)| q)
    }
}

pub fn enumerate_agent_mdp(config: &WirelessConfig, layout: &BsLayout, agent: usize) -> Result<AgentMdp> {
    let ing = Ingredients::new(config, layout)?;
    if agent >= config.n_agents {
        return Err(Error::index("agent", agent, config.n_agents));
    }
    let g = ing.geometry;
    let n_levels = ing.levels.count;
    let codec = StateCodec { geometry: g, n_levels };
    let n_states = codec.n_states();
    if n_states > config.enumeration_cap {
        return Err(Error::EnumerationCap {
            size: n_states,
            cap: config.enumeration_cap,
        });
    }
    let n_pos = g.n_positions();
    let n_others = config.n_agents - 1;
    let others: Vec<usize> = (0..config.n_agents).filter(|&j| j != agent).collect();
    let other_codec = JointCodec::uniform(n_pos, n_others)?;
    let n_cfg = other_codec.size() as usize;
    if other_codec.size() > OTHER_CONFIG_CAP as u64 {
        return Err(Error::EnumerationCap {
            size: n_cfg,
            cap: OTHER_CONFIG_CAP,
        });
    }

    // level distribution of this agent for (own position, others' config)
    let mut level_table = vec![0.0; n_pos * n_cfg * n_levels];
    let mut positions = vec![Position::new(0, 0); config.n_agents];
    let mut parts = vec![0usize; n_others];
    for cfg in 0..n_cfg {
        other_codec.decode_into(cfg as u64, &mut parts);
        for (k, &j) in others.iter().enumerate() {
            positions[j] = g.position_at(parts[k]);
        }
        for own in 0..n_pos {
            positions[agent] = g.position_at(own);
            let profile = ing.level_profile(&positions, config.arss_threshold);
            let start = (own * n_cfg + cfg) * n_levels;
            level_table[start..start + n_levels].copy_from_slice(&profile[agent]);
        }
    }

    // others' one-step transition under uniform random walks
    let mut other_next: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_cfg);
    for cfg in 0..n_cfg {
        other_codec.decode_into(cfg as u64, &mut parts);
        let mut dist: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for (k, &j) in others.iter().enumerate() {
            let step = ing.next_positions(g.position_at(parts[k]), config.is_mobile(j));
            let mut grown = Vec::with_capacity(dist.len() * step.len());
            for (prefix, p) in &dist {
                for &(q, w) in &step {
                    let mut v = prefix.clone();
                    v.push(g.position_index(q));
                    grown.push((v, p * w));
                }
            }
            dist = grown;
        }
        other_next.push(dist.into_iter().map(|(v, p)| (other_codec.encode(&v) as usize, p)).collect());
    }

    let costs_by_pos = ing.cost_table(agent, layout);
    let n_bs = layout.n_stations();
    let n_actions = ing.actions.n_actions();
    let mask = Arc::new(ActionMask::from_fn(n_states, n_actions, |s, a| {
        layout.covers(ing.actions.decode(a).bs, codec.position_of(s))
    }));
    let mut probs = vec![0.0; n_states * n_actions * n_states];
    let mut costs = vec![0.0; n_states * n_actions];
    let mut posterior = vec![0.0; n_cfg];
    for s in 0..n_states {
        let st = codec.decode(s);
        let own = g.position_index(st.position);
        let mut total = 0.0;
        for (cfg, w) in posterior.iter_mut().enumerate() {
            *w = level_table[(own * n_cfg + cfg) * n_levels + st.level];
            total += *w;
        }
        if total > 0.0 {
            posterior.iter_mut().for_each(|w| *w /= total);
        } else {
            posterior.iter_mut().for_each(|w| *w = 1.0 / n_cfg as f64);
        }
        for a in 0..n_actions {
            let row_start = (s * n_actions + a) * n_states;
            if !mask.is_valid(s, a) {
                probs[row_start + s] = 1.0;
                continue;
            }
            let act = ing.actions.decode(a);
            let own_next = ing.next_positions(st.position, act.moving && config.is_mobile(agent));
            let mut expected_cost = 0.0;
            for (cfg, &w) in posterior.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for &(cfg_next, q) in &other_next[cfg] {
                    for &(p_next, d) in &own_next {
                        let pi = g.position_index(p_next);
                        let weight = w * q * d;
                        let lt = (pi * n_cfg + cfg_next) * n_levels;
                        for l in 0..n_levels {
                            let pl = level_table[lt + l];
                            if pl == 0.0 {
                                continue;
                            }
                            probs[row_start + pi * n_levels + l] += weight * pl;
                            expected_cost += weight * pl * cost_at(&costs_by_pos, &g, n_bs, n_levels, p_next, act.bs, l);
                        }
                    }
                }
            }
            costs[s * n_actions + a] = expected_cost;
            // absorb rounding so rows are stochastic to machine precision
            let row = &mut probs[row_start..row_start + n_states];
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    Ok(AgentMdp {
        agent,
        codec,
        actions: ing.actions,
        kernel: TransitionTensor::from_probs(n_states, n_actions, probs)?,
        costs,
        mask,
    })
}

/// Exact joint MDP over the reachable joint states.
///
/// Joint states are mixed-radix concatenations of local state ids. Only
/// `(positions, levels)` combinations whose level probabilities exceed
/// [`LEVEL_EPS`] are kept; the transition row of a joint state depends only
/// on its positions and is shared by all of its level combinations.
#[derive(Debug, Clone)]
pub struct JointMdp {
    pub codec: StateCodec,
    pub local_actions: ActionCodec,
    pub joint_states: JointCodec,
    pub joint_actions: JointCodec,
    pub reachable: Vec<u64>,
    index: HashMap<u64, usize>,
    /// Position-tuple id of each reachable state.
    config_of: Vec<u32>,
    /// `rows[cfg * n_joint_actions + a]`, empty for invalid joint actions.
    rows: Vec<Vec<(u32, f64)>>,
    pub costs: Vec<f64>,
    pub mask: Arc<ActionMask>,
}

/// Cap on reachable joint states for [`enumerate_joint_mdp`].
pub const JOINT_STATE_CAP: usize = 400_000;

pub fn enumerate_joint_mdp(config: &WirelessConfig, layout: &BsLayout) -> Result<JointMdp> {
    let ing = Ingredients::new(config, layout)?;
    let g = ing.geometry;
    let n = config.n_agents;
    let n_levels = ing.levels.count;
    let codec = StateCodec { geometry: g, n_levels };
    let n_pos = g.n_positions();
    let pos_codec = JointCodec::uniform(n_pos, n)?;
    if pos_codec.size() > JOINT_STATE_CAP as u64 {
        return Err(Error::EnumerationCap {
            size: pos_codec.size() as usize,
            cap: JOINT_STATE_CAP,
        });
    }
    let n_cfg = pos_codec.size() as usize;
    let joint_states = JointCodec::uniform(codec.n_states(), n)?;
    let n_la = ing.actions.n_actions();
    let joint_actions = JointCodec::uniform(n_la, n)?;
    let n_ja = joint_actions.size() as usize;

    // level supports per position tuple
    let mut supports: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(n_cfg);
    let mut parts = vec![0usize; n];
    let mut positions = vec![Position::new(0, 0); n];
    for cfg in 0..n_cfg {
        pos_codec.decode_into(cfg as u64, &mut parts);
        for i in 0..n {
            positions[i] = g.position_at(parts[i]);
        }
        let profile = ing.level_profile(&positions, config.arss_threshold);
        supports.push(
            profile
                .into_iter()
                .map(|dist| {
                    let kept: Vec<(usize, f64)> = dist.into_iter().enumerate().filter(|&(_, p)| p > LEVEL_EPS).collect();
                    let total: f64 = kept.iter().map(|&(_, p)| p).sum();
                    kept.into_iter().map(|(l, p)| (l, p / total)).collect()
                })
                .collect(),
        );
    }

    // reachable states, with the probability of each level combination
    let mut reachable = Vec::new();
    let mut config_of = Vec::new();
    let mut index = HashMap::new();
    let mut combos: Vec<Vec<(Vec<usize>, f64)>> = Vec::with_capacity(n_cfg);
    for cfg in 0..n_cfg {
        pos_codec.decode_into(cfg as u64, &mut parts);
        let mut list: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for i in 0..n {
            let mut grown = Vec::new();
            for (prefix, p) in &list {
                for &(l, q) in &supports[cfg][i] {
                    let mut v = prefix.clone();
                    v.push(parts[i] * n_levels + l);
                    grown.push((v, p * q));
                }
            }
            list = grown;
        }
        for (locals, _) in &list {
            let id = joint_states.encode(locals);
            index.insert(id, reachable.len());
            reachable.push(id);
            config_of.push(cfg as u32);
        }
        combos.push(list);
        if reachable.len() > JOINT_STATE_CAP {
            return Err(Error::EnumerationCap {
                size: reachable.len(),
                cap: JOINT_STATE_CAP,
            });
        }
    }

    let cost_tables: Vec<Vec<f64>> = (0..n).map(|i| ing.cost_table(i, layout)).collect();
    let n_bs = layout.n_stations();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_cfg * n_ja];
    let mut cfg_costs = vec![0.0; n_cfg * n_ja];
    let mut cfg_valid = vec![false; n_cfg * n_ja];
    let mut aparts = vec![0usize; n];
    for cfg in 0..n_cfg {
        pos_codec.decode_into(cfg as u64, &mut parts);
        for ja in 0..n_ja {
            joint_actions.decode_into(ja as u64, &mut aparts);
            let acts: Vec<_> = aparts.iter().map(|&a| ing.actions.decode(a)).collect();
            let valid = (0..n).all(|i| layout.covers(acts[i].bs, g.position_at(parts[i])));
            if !valid {
                continue;
            }
            cfg_valid[cfg * n_ja + ja] = true;
            let mut next: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
            for i in 0..n {
                let step = ing.next_positions(g.position_at(parts[i]), acts[i].moving && config.is_mobile(i));
                let mut grown = Vec::with_capacity(next.len() * step.len());
                for (prefix, p) in &next {
                    for &(q, w) in &step {
                        let mut v = prefix.clone();
                        v.push(g.position_index(q));
                        grown.push((v, p * w));
                    }
                }
                next = grown;
            }
            let mut row: Vec<(u32, f64)> = Vec::new();
            let mut expected_cost = 0.0;
            for (pnext, q) in &next {
                let cfg_next = pos_codec.encode(pnext) as usize;
                for i in 0..n {
                    for &(l, pl) in &supports[cfg_next][i] {
                        expected_cost += q
                            * pl
                            * cost_at(&cost_tables[i], &g, n_bs, n_levels, g.position_at(pnext[i]), acts[i].bs, l);
                    }
                }
                for (locals, pl) in &combos[cfg_next] {
                    row.push((index[&joint_states.encode(locals)] as u32, q * pl));
                }
            }
            row.sort_by_key(|&(s, _)| s);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for (s, p) in row {
                match merged.last_mut() {
                    Some((m, w)) if *m == s => *w += p,
                    _ => merged.push((s, p)),
                }
            }
            let total: f64 = merged.iter().map(|&(_, p)| p).sum();
            merged.iter_mut().for_each(|(_, p)| *p /= total);
            rows[cfg * n_ja + ja] = merged;
            cfg_costs[cfg * n_ja + ja] = expected_cost;
        }
    }

    let n_states = reachable.len();
    let mut costs = vec![0.0; n_states * n_ja];
    for s in 0..n_states {
        let cfg = config_of[s] as usize;
        costs[s * n_ja..(s + 1) * n_ja].copy_from_slice(&cfg_costs[cfg * n_ja..(cfg + 1) * n_ja]);
    }
    let mask = Arc::new(ActionMask::from_fn(n_states, n_ja, |s, a| cfg_valid[config_of[s] as usize * n_ja + a]));
    Ok(JointMdp {
        codec,
        local_actions: ing.actions,
        joint_states,
        joint_actions,
        reachable,
        index,
        config_of,
        rows,
        costs,
        mask,
    })
}

impl JointMdp {
    pub fn n_reachable(&self) -> usize {
        self.reachable.len()
    }

    /// Dense index of a joint state id, if reachable.
    pub fn index_of(&self, joint_state: u64) -> Option<usize> {
        self.index.get(&joint_state).copied()
    }

    pub fn solve(&self, gamma: f64, tol: f64) -> Result<QTable> {
        ValueIteration::new(gamma, tol)
            .with_mask(self.mask.clone())
            .solve(self, &self.costs)
            .map(|(q, _)| q)
    }
}

impl TransitionModel for JointMdp {
    fn n_states(&self) -> usize {
        self.reachable.len()
    }

    fn n_actions(&self) -> usize {
        self.joint_actions.size() as usize
    }

    fn for_each_successor(&self, s: StateId, a: ActionId, f: &mut dyn FnMut(StateId, f64)) {
        let n_ja = self.n_actions();
        let row = &self.rows[self.config_of[s] as usize * n_ja + a];
        if row.is_empty() {
            f(s, 1.0);
        } else {
            for &(n, p) in row {
                f(n as usize, p);
            }
        }
    }

    fn expectation(&self, s: StateId, a: ActionId, values: &[f64]) -> f64 {
        let n_ja = self.n_actions();
        let row = &self.rows[self.config_of[s] as usize * n_ja + a];
        if row.is_empty() {
            values[s]
        } else {
            row.iter().map(|&(n, p)| p * values[n as usize]).sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TransitionModel;
    use crate::wireless::{BaseStationSpec, WirelessNetwork};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_config() -> WirelessConfig {
        WirelessConfig {
            grid_size: 4.0,
            cell_size: 2.0,
            base_stations: Some(vec![
                BaseStationSpec { x: 0, y: 0, radius: 4.5 },
                BaseStationSpec { x: 2, y: 2, radius: 4.5 },
            ]),
            arss_min: 0.01,
            arss_step: 0.045,
            arss_max: 0.1,
            arss_threshold: 0.075,
            sigma_c: 0.01,
            sigma_u: 0.05,
            ..WirelessConfig::default()
        }
    }

    fn layout(config: &WirelessConfig) -> BsLayout {
        BsLayout::place(config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn agent_kernel_rows_are_stochastic() {
        let config = WirelessConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layout = BsLayout::place(&config, &mut rng).unwrap();
        let mdp = enumerate_agent_mdp(&config, &layout, 0).unwrap();
        for s in 0..mdp.codec.n_states() {
            for a in 0..mdp.actions.n_actions() {
                let sum: f64 = mdp.kernel.row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert!(mdp.costs.iter().all(|c| c.is_finite() && *c >= 0.0));
    }

    #[test]
    fn immobile_agent_has_identity_position_kernel() {
        let config = WirelessConfig {
            mobile: vec![false, true],
            ..small_config()
        };
        let mdp = enumerate_agent_mdp(&config, &layout(&config), 0).unwrap();
        let c = mdp.codec;
        for s in 0..c.n_states() {
            for a in 0..mdp.actions.n_actions() {
                if !mdp.mask.is_valid(s, a) {
                    continue;
                }
                let mut same = 0.0;
                for (next, p) in mdp.kernel.row(s, a).iter().enumerate() {
                    if c.position_of(next) == c.position_of(s) {
                        same += p;
                    }
                }
                assert!((same - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let config = WirelessConfig {
            enumeration_cap: 10,
            ..small_config()
        };
        assert!(matches!(
            enumerate_agent_mdp(&config, &layout(&config), 0),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn cost_noise_is_refused() {
        let config = WirelessConfig {
            cost_noise_std: 0.1,
            ..small_config()
        };
        assert!(matches!(
            enumerate_agent_mdp(&config, &layout(&config), 0),
            Err(Error::Precondition(_))
        ));
    }

    /// Agent 0 acts uniformly at random, agent 1 always walks; both walks are
    /// doubly stochastic, so in stationarity the other agent's position given
    /// agent 0's local state follows exactly the oracle's posterior.
    #[test]
    fn simulated_frequencies_match_enumerated_kernel() {
        let config = small_config();
        let layout = layout(&config);
        let mdp = enumerate_agent_mdp(&config, &layout, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut net = WirelessNetwork::new(config, layout, &mut rng).unwrap();
        let n_s = mdp.codec.n_states();
        let n_a = mdp.actions.n_actions();
        let mut counts = vec![0u32; n_s * n_a * n_s];
        let mut visits = vec![0u32; n_s * n_a];
        for _ in 0..1000 {
            net.step(&[2, 2], &mut rng).unwrap();
        }
        for _ in 0..3_000_000 {
            let s = net.local_state_id(0);
            let valid = net.action_mask().valid_actions(s);
            let a = valid[rng.random_range(0..valid.len())];
            let a1 = net.action_mask().valid_actions(net.local_state_id(1)).into_iter().find(|&b| b >= 2).unwrap();
            net.step(&[a, a1], &mut rng).unwrap();
            let next = net.local_state_id(0);
            counts[(s * n_a + a) * n_s + next] += 1;
            visits[s * n_a + a] += 1;
        }
        let mut worst: f64 = 0.0;
        for s in 0..n_s {
            for a in 0..n_a {
                let v = visits[s * n_a + a];
                if v < 10_000 {
                    continue;
                }
                for next in 0..n_s {
                    let emp = counts[(s * n_a + a) * n_s + next] as f64 / v as f64;
                    worst = worst.max((emp - mdp.kernel.get(s, a, next)).abs());
                }
            }
        }
        assert!(worst < 0.02, "max abs deviation {worst}");
    }

    #[test]
    fn joint_kernel_is_stochastic_and_matches_simulation() {
        let config = small_config();
        let layout = layout(&config);
        let joint = enumerate_joint_mdp(&config, &layout).unwrap();
        joint.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = WirelessNetwork::new(config, layout, &mut rng).unwrap();
        let start = joint.joint_states.encode(&net.local_state_ids());
        let s = joint.index_of(start).unwrap();
        let ja = 0usize;
        let parts = joint.joint_actions.decode(ja as u64);
        let mut counts: HashMap<usize, u32> = HashMap::new();
        let snapshot = net.state().positions.clone();
        let n = 200_000;
        let mut valid = true;
        for _ in 0..n {
            net.set_positions(snapshot.clone(), &mut rng).unwrap();
            let out = net.step(&parts, &mut rng).unwrap();
            valid &= out.valid.iter().all(|&v| v);
            let id = joint.joint_states.encode(&net.local_state_ids());
            *counts.entry(joint.index_of(id).unwrap()).or_default() += 1;
        }
        if valid {
            let mut worst: f64 = 0.0;
            joint.for_each_successor(s, ja, &mut |next, p| {
                let emp = counts.get(&next).copied().unwrap_or(0) as f64 / n as f64;
                worst = worst.max((emp - p).abs());
            });
            assert!(worst < 0.01, "{worst}");
        }
    }
}
