use serde::{Deserialize, Serialize};

use super::{GridGeometry, Position};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId};

/// Local state `(x, y, I)` with `I` stored as a level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Position,
    pub level: usize,
}

/// Local action `(m, b)`: `moving` is `m = 1`, `bs` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentAction {
    pub moving: bool,
    pub bs: usize,
}

/// Dense indexing of local states: `(position_index) * n_levels + level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateCodec {
    pub geometry: GridGeometry,
    pub n_levels: usize,
}

impl StateCodec {
    pub fn n_states(&self) -> usize {
        self.geometry.n_positions() * self.n_levels
    }

    pub fn encode(&self, s: AgentState) -> StateId {
        self.geometry.position_index(s.position) * self.n_levels + s.level
    }

    pub fn decode(&self, id: StateId) -> AgentState {
        AgentState {
            position: self.geometry.position_at(id / self.n_levels),
            level: id % self.n_levels,
        }
    }

    pub fn position_of(&self, id: StateId) -> Position {
        self.geometry.position_at(id / self.n_levels)
    }
}

/// Dense indexing of local actions: `m * N_B + (b - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionCodec {
    pub n_bs: usize,
}

impl ActionCodec {
    pub fn n_actions(&self) -> usize {
        2 * self.n_bs
    }

    pub fn encode(&self, a: AgentAction) -> ActionId {
        usize::from(a.moving) * self.n_bs + (a.bs - 1)
    }

    pub fn decode(&self, id: ActionId) -> AgentAction {
        AgentAction {
            moving: id >= self.n_bs,
            bs: id % self.n_bs + 1,
        }
    }
}

/// Mixed-radix concatenation of per-agent indices, agent 0 most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointCodec {
    radices: Vec<usize>,
    size: u64,
}

impl JointCodec {
    pub fn new(radices: Vec<usize>) -> Result<Self> {
        let mut size: u64 = 1;
        for &r in &radices {
            if r == 0 {
                return Err(Error::Shape("zero radix in joint codec".into()));
            }
            size = size
                .checked_mul(r as u64)
                .ok_or_else(|| Error::Shape("joint space exceeds u64".into()))?;
        }
        Ok(Self { radices, size })
    }

    pub fn uniform(radix: usize, n: usize) -> Result<Self> {
        Self::new(vec![radix; n])
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn arity(&self) -> usize {
        self.radices.len()
    }

    pub fn encode(&self, parts: &[usize]) -> u64 {
        debug_assert_eq!(parts.len(), self.radices.len());
        parts
            .iter()
            .zip(&self.radices)
            .fold(0u64, |acc, (&p, &r)| acc * r as u64 + p as u64)
    }

    pub fn decode(&self, id: u64) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        self.decode_into(id, &mut out);
        out
    }

    pub fn decode_into(&self, mut id: u64, out: &mut [usize]) {
        for (slot, &r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = (id % r as u64) as usize;
            id /= r as u64;
        }
    }

    /// Component `i` of a joint index.
    pub fn component(&self, id: u64, i: usize) -> usize {
        let stride: u64 = self.radices[i + 1..].iter().map(|&r| r as u64).product();
        ((id / stride) % self.radices[i] as u64) as usize
    }
}
