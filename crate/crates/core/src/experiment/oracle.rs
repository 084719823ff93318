use crate::error::{Error, Result};
use crate::mdp::{ActionId, QTable};
use crate::wireless::{enumerate_agent_mdp, enumerate_joint_mdp, BsLayout, JointMdp, WirelessConfig};

/// Exact joint reference: the enumerated joint MDP, its optimal Q-table and
/// greedy policy over the reachable joint states.
#[derive(Debug, Clone)]
pub struct JointOracle {
    pub mdp: JointMdp,
    pub q: QTable,
    /// Greedy joint action per reachable state (dense order).
    pub policy: Vec<u64>,
    /// Valid `(dense state, joint action)` pairs.
    entries: Vec<(u32, u32)>,
}

impl JointOracle {
    pub fn build(config: &WirelessConfig, layout: &BsLayout, gamma: f64, tol: f64) -> Result<Self> {
        if config.cost_noise_std != 0.0 {
            return Err(Error::Config("the joint oracle needs cost_noise_std = 0".into()));
        }
        let mdp = enumerate_joint_mdp(config, layout)?;
        let q = mdp.solve(gamma, tol)?;
        let mut policy = Vec::with_capacity(mdp.n_reachable());
        let mut entries = Vec::new();
        for s in 0..mdp.n_reachable() {
            let a = q.argmin(s).ok_or(Error::NoValidAction { state: s })?;
            policy.push(a as u64);
            for a in 0..q.n_actions() {
                if q.is_valid(s, a) {
                    entries.push((s as u32, a as u32));
                }
            }
        }
        Ok(Self {
            mdp,
            q,
            policy,
            entries,
        })
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_reachable()
    }

    /// Joint state ids of the reachable states, in dense order.
    pub fn states(&self) -> &[u64] {
        &self.mdp.reachable
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    /// Learned values at every valid entry, in oracle order.
    pub fn collect_values(&self, mut value: impl FnMut(u64, u64) -> f64) -> Vec<f64> {
        self.entries
            .iter()
            .map(|&(s, a)| value(self.mdp.reachable[s as usize], a as u64))
            .collect()
    }

    pub fn optimal_values(&self) -> Vec<f64> {
        self.entries.iter().map(|&(s, a)| self.q.get(s as usize, a as ActionId)).collect()
    }

    /// Mean squared gap to the optimal values over the valid entries.
    pub fn aqd(&self, value: impl FnMut(u64, u64) -> f64) -> f64 {
        let learned = self.collect_values(value);
        let sum: f64 = learned
            .iter()
            .zip(&self.entries)
            .map(|(v, &(s, a))| (v - self.q.get(s as usize, a as ActionId)).powi(2))
            .sum();
        sum / learned.len() as f64
    }

    /// Fraction of reachable states where `greedy` disagrees with the oracle.
    pub fn ape(&self, mut greedy: impl FnMut(u64) -> Result<u64>) -> Result<f64> {
        let mut differ = 0usize;
        for (k, &s) in self.mdp.reachable.iter().enumerate() {
            if greedy(s)? != self.policy[k] {
                differ += 1;
            }
        }
        Ok(differ as f64 / self.policy.len() as f64)
    }
}

/// Optimal Q-tables of every agent's individual MDP.
pub fn agent_oracles(config: &WirelessConfig, layout: &BsLayout, gamma: f64, tol: f64) -> Result<Vec<QTable>> {
    (0..config.n_agents)
        .map(|i| enumerate_agent_mdp(config, layout, i)?.solve(gamma, tol))
        .collect()
}
