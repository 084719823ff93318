use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::StateId;
use crate::wireless::{ArssLevels, AgentState, GridGeometry, Position, StateCodec};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian density of `reading` around `mean`.
pub fn likelihood(reading: f64, mean: f64, sigma: f64) -> f64 {
    log_likelihood(reading, mean, sigma).exp()
}

pub fn log_likelihood(reading: f64, mean: f64, sigma: f64) -> f64 {
    let z = (reading - mean) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// Search-window growth between belief resets:
/// `radius(t) = delta0 + 2 * cell * min(l, t mod l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub delta0: f64,
    pub cell_size: f64,
    pub period: u64,
}

impl WindowSchedule {
    pub fn radius(&self, t: u64) -> f64 {
        let k = (t % self.period).min(self.period);
        self.delta0 + 2.0 * self.cell_size * k as f64
    }

    pub fn is_reset(&self, t: u64) -> bool {
        t.is_multiple_of(self.period)
    }
}

/// Everything an agent needs to score candidate geometries against its own
/// ARSS reading.
#[derive(Debug, Clone)]
pub struct EstimationModel {
    pub geometry: GridGeometry,
    pub powers: Vec<f64>,
    pub floor: f64,
    pub sigma: f64,
    pub levels: ArssLevels,
    pub codec: StateCodec,
}

impl EstimationModel {
    /// Noiseless ARSS at `agent` for a full position profile.
    pub fn arss(&self, positions: &[Position], agent: usize) -> f64 {
        let own = positions[agent];
        positions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != agent)
            .map(|(j, &p)| {
                let d = self.geometry.distance(own, p).max(self.floor);
                self.powers[j] / (d * d)
            })
            .sum()
    }
}

/// Result of one MAP step.
#[derive(Debug, Clone, PartialEq)]
pub struct MapOutcome {
    /// Estimated positions of the other agents, in ascending agent order.
    pub positions: Vec<Position>,
    pub confidence: f64,
    /// Posterior underflowed and the belief fell back to uniform.
    pub fallback: bool,
}

/// An agent's belief over the other agents' positions, restricted to a
/// window around a fixed center.
#[derive(Debug, Clone)]
pub struct BeliefVector {
    owner: usize,
    n_agents: usize,
    centers: Vec<Position>,
    radius: f64,
    cap: usize,
    /// Per other agent: position indices inside the window, ascending.
    axes: Vec<Vec<u32>>,
    /// Candidate keys in ascending order (mixed radix over position
    /// indices, earliest other agent most significant).
    keys: Vec<u64>,
    probs: Vec<f64>,
}

impl BeliefVector {
    /// Uniform belief over the window of `radius` around `centers` (one
    /// center per other agent, ascending agent order).
    pub fn new(
        owner: usize,
        n_agents: usize,
        centers: Vec<Position>,
        radius: f64,
        geometry: &GridGeometry,
        cap: usize,
    ) -> Result<Self> {
        if owner >= n_agents || centers.len() + 1 != n_agents {
            return Err(Error::Validation("belief needs one center per other agent".into()));
        }
        let mut b = Self {
            owner,
            n_agents,
            centers,
            radius,
            cap,
            axes: Vec::new(),
            keys: Vec::new(),
            probs: Vec::new(),
        };
        b.fit_window(geometry);
        b.keys = b.enumerate_keys(geometry.n_positions())?;
        b.probs = vec![1.0 / b.keys.len() as f64; b.keys.len()];
        Ok(b)
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn centers(&self) -> &[Position] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Other agents' ids in ascending order.
    pub fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_agents).filter(move |&j| j != self.owner)
    }

    /// Positions of the other agents for the `k`-th candidate.
    pub fn candidate(&self, k: usize, geometry: &GridGeometry) -> Vec<Position> {
        decode_key(self.keys[k], self.n_agents - 1, geometry.n_positions())
            .into_iter()
            .map(|idx| geometry.position_at(idx))
            .collect()
    }

    /// Whether a configuration of other-agent positions is in the support.
    pub fn contains(&self, positions: &[Position], geometry: &GridGeometry) -> bool {
        let key = encode_key(positions.iter().map(|&p| geometry.position_index(p)), geometry.n_positions());
        self.keys.binary_search(&key).is_ok()
    }

    /// Widens the window; candidates entering the support get the uniform
    /// share `1 / |support|` before renormalization. Growth that would push
    /// the support past the cap is skipped, so the window saturates.
    pub fn grow(&mut self, radius: f64, geometry: &GridGeometry) -> Result<()> {
        if radius <= self.radius {
            return Ok(());
        }
        let old_radius = std::mem::replace(&mut self.radius, radius);
        let axes = self.window_axes(geometry);
        if axes == self.axes {
            return Ok(());
        }
        if support_size(&axes).is_none_or(|s| s > self.cap) {
            self.radius = old_radius;
            return Ok(());
        }
        self.axes = axes;
        let old: HashMap<u64, f64> = self.keys.iter().copied().zip(self.probs.iter().copied()).collect();
        self.keys = self.enumerate_keys(geometry.n_positions())?;
        let share = 1.0 / self.keys.len() as f64;
        self.probs = self.keys.iter().map(|k| old.get(k).copied().unwrap_or(share)).collect();
        normalize(&mut self.probs);
        Ok(())
    }

    /// Uniform belief over the window of `radius` around new centers.
    pub fn reset(&mut self, centers: Vec<Position>, radius: f64, geometry: &GridGeometry) -> Result<()> {
        if centers.len() + 1 != self.n_agents {
            return Err(Error::Validation("belief needs one center per other agent".into()));
        }
        self.centers = centers;
        self.radius = radius;
        self.fit_window(geometry);
        self.keys = self.enumerate_keys(geometry.n_positions())?;
        self.probs = vec![1.0 / self.keys.len() as f64; self.keys.len()];
        Ok(())
    }

    /// Multiplies the belief by the likelihood of `reading` under every
    /// candidate geometry, renormalizes by a softmax over log scores and
    /// returns the maximizer (ties to the lowest candidate).
    pub fn map_estimate(&mut self, reading: f64, own: Position, model: &EstimationModel) -> MapOutcome {
        // The mean ARSS is a sum of per-agent terms, so tabulate each axis once
        // and walk the keys with a mixed-radix counter (keys are in counter order).
        let table: Vec<Vec<f64>> = self
            .others()
            .zip(&self.axes)
            .map(|(j, axis)| {
                axis.iter()
                    .map(|&idx| {
                        let d = model.geometry.distance(own, model.geometry.position_at(idx as usize)).max(model.floor);
                        model.powers[j] / (d * d)
                    })
                    .collect()
            })
            .collect();
        let mut digits = vec![0usize; table.len()];
        let mut scores = Vec::with_capacity(self.keys.len());
        for &p in &self.probs {
            let mean: f64 = table.iter().zip(&digits).map(|(t, &d)| t[d]).sum();
            scores.push(p.ln() + log_likelihood(reading, mean, model.sigma));
            for slot in (0..digits.len()).rev() {
                digits[slot] += 1;
                if digits[slot] < table[slot].len() {
                    break;
                }
                digits[slot] = 0;
            }
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fallback = !max.is_finite();
        if fallback {
            let u = 1.0 / self.probs.len() as f64;
            self.probs.iter_mut().for_each(|p| *p = u);
        } else {
            for (p, s) in self.probs.iter_mut().zip(&scores) {
                *p = (s - max).exp();
            }
            normalize(&mut self.probs);
        }
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        MapOutcome {
            positions: self.candidate(best, &model.geometry),
            confidence: self.probs[best],
            fallback,
        }
    }

    /// Sets the axes for the current radius, shrinking the radius one
    /// lattice spacing at a time while the support exceeds the cap.
    fn fit_window(&mut self, geometry: &GridGeometry) {
        loop {
            self.axes = self.window_axes(geometry);
            if self.radius <= 0.0 || support_size(&self.axes).is_some_and(|s| s <= self.cap) {
                return;
            }
            self.radius = (self.radius - geometry.cell_size).max(0.0);
        }
    }

    fn window_axes(&self, geometry: &GridGeometry) -> Vec<Vec<u32>> {
        let tol = 1e-9 * geometry.cell_size.max(1.0);
        self.centers
            .iter()
            .map(|&c| {
                geometry
                    .positions()
                    .filter(|&p| geometry.distance(c, p) <= self.radius + tol)
                    .map(|p| geometry.position_index(p) as u32)
                    .collect()
            })
            .collect()
    }

    fn enumerate_keys(&self, n_pos: usize) -> Result<Vec<u64>> {
        let size = support_size(&self.axes);
        match size {
            Some(s) if s <= self.cap => {}
            _ => {
                return Err(Error::EnumerationCap {
                    size: size.unwrap_or(usize::MAX),
                    cap: self.cap,
                })
            }
        }
        let mut keys = vec![0u64];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(keys.len() * axis.len());
            for &k in &keys {
                for &p in axis {
                    next.push(k * n_pos as u64 + p as u64);
                }
            }
            keys = next;
        }
        if keys.is_empty() {
            return Err(Error::Validation("belief window is empty".into()));
        }
        keys.sort_unstable();
        Ok(keys)
    }
}

fn support_size(axes: &[Vec<u32>]) -> Option<usize> {
    axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len().max(1)))
}

fn normalize(p: &mut [f64]) {
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
}

fn encode_key(indices: impl Iterator<Item = usize>, n_pos: usize) -> u64 {
    indices.fold(0u64, |acc, i| acc * n_pos as u64 + i as u64)
}

fn decode_key(mut key: u64, n: usize, n_pos: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = (key % n_pos as u64) as usize;
        key /= n_pos as u64;
    }
    out
}

/// One agent's estimate of the full joint state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub agent: usize,
    /// Estimated local state of every agent.
    pub local_states: Vec<StateId>,
    pub confidence: f64,
    pub t: u64,
}

impl JointEstimate {
    /// Assembles the joint state from the estimator's own local state and
    /// the estimated positions of the others, whose ARSS levels are the
    /// quantized noiseless values of the estimated geometry.
    pub fn assemble(
        agent: usize,
        own: AgentState,
        outcome: &MapOutcome,
        model: &EstimationModel,
        t: u64,
    ) -> Self {
        let n = outcome.positions.len() + 1;
        let mut positions = Vec::with_capacity(n);
        let mut others = outcome.positions.iter();
        for j in 0..n {
            positions.push(if j == agent { own.position } else { *others.next().expect("one position per other agent") });
        }
        let local_states = (0..n)
            .map(|j| {
                if j == agent {
                    model.codec.encode(own)
                } else {
                    let level = model.levels.quantize(model.arss(&positions, j));
                    model.codec.encode(AgentState {
                        position: positions[j],
                        level,
                    })
                }
            })
            .collect();
        Self {
            agent,
            local_states,
            confidence: outcome.confidence,
            t,
        }
    }
}

/// Highest-confidence estimate, ties to the lowest agent id.
pub fn select_estimate(estimates: &[JointEstimate]) -> Option<&JointEstimate> {
    let mut best: Option<&JointEstimate> = None;
    for e in estimates {
        match best {
            Some(b) if e.confidence < b.confidence || (e.confidence == b.confidence && e.agent >= b.agent) => {}
            _ => best = Some(e),
        }
    }
    best
}
