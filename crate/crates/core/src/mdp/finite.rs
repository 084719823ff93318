use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::{value_iteration, ActionId, ActionMask, QTable, StateId, TransitionModel, TransitionTensor};
use crate::error::{Error, Result};

/// A fully specified finite MDP with expected costs `c(s, a)`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    pub kernel: TransitionTensor,
    pub costs: Vec<f64>,
    pub mask: Option<Arc<ActionMask>>,
}

impl FiniteMdp {
    pub fn new(kernel: TransitionTensor, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != kernel.n_states() * kernel.n_actions() {
            return Err(Error::Shape("cost matrix does not match kernel".into()));
        }
        kernel.validate()?;
        Ok(Self {
            kernel,
            costs,
            mask: None,
        })
    }

    /// Random MDP: each `(s, a)` row spreads mass over `branching` distinct
    /// successors with random weights; costs uniform in `[0, 1)`.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, branching: usize, rng: &mut R) -> Result<Self> {
        if branching == 0 || branching > n_states {
            return Err(Error::Validation(format!("branching {branching} not in 1..={n_states}")));
        }
        let mut probs = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let start = (s * n_actions + a) * n_states;
                let picks = sample_indices(rng, n_states, branching);
                let weights: Vec<f64> = (0..branching).map(|_| rng.random::<f64>() + 0.05).collect();
                let total: f64 = weights.iter().sum();
                for (idx, w) in picks.iter().zip(&weights) {
                    probs[start + idx] = w / total;
                }
            }
        }
        let kernel = TransitionTensor::from_probs(n_states, n_actions, probs)?;
        let costs = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
        Self::new(kernel, costs)
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.kernel.n_actions()
    }

    pub fn cost(&self, s: StateId, a: ActionId) -> f64 {
        self.costs[s * self.n_actions() + a]
    }

    pub fn step<R: Rng + ?Sized>(&self, s: StateId, a: ActionId, rng: &mut R) -> (StateId, f64) {
        (self.kernel.sample_next(s, a, rng), self.cost(s, a))
    }

    pub fn optimal_q(&self, gamma: f64, tol: f64) -> Result<QTable> {
        value_iteration(&self.kernel, &self.costs, gamma, tol)
    }
}
