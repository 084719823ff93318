//! Finite-MDP primitives: dense Q-tables, transition kernels, the tabular
//! Q-learning update, epsilon-greedy exploration and exact solvers used as
//! oracles.

mod explore;
mod finite;
mod kernel;
mod learner;
mod qtable;
mod schedule;
mod solve;

pub use explore::epsilon_greedy;
pub use finite::FiniteMdp;
pub use kernel::{estimate_ptt, PttCounts, SparseKernel, TransitionModel, TransitionTensor};
pub use learner::{HystereticRates, QLearner};
pub use qtable::{q_update, ActionMask, QTable, Sample};
pub use schedule::{Exploration, LearningRate, Schedules, UpdateRatio};
pub use solve::{greedy_policy, value_iteration, ValueIteration, ValueIterationReport};

pub type StateId = usize;
pub type ActionId = usize;

/// Index of the smallest finite value among `candidates`, ties to the lowest
/// index. Returns `None` when the iterator is empty.
pub(crate) fn argmin_lowest<I>(candidates: I) -> Option<(usize, f64)>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut best: Option<(usize, f64)> = None;
    for (idx, v) in candidates {
        match best {
            Some((_, bv)) if v >= bv => {}
            _ => best = Some((idx, v)),
        }
    }
    best
}
