use rand::Rng;

use super::{epsilon_greedy, q_update, ActionId, QTable, Sample, Schedules, StateId};
use crate::error::Result;

/// Two-rate step sizes for hysteretic Q-learning on costs: updates that
/// lower `Q` (better than expected) use `alpha_t`, updates that raise it use
/// `alpha_t * slow_ratio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HystereticRates {
    pub slow_ratio: f64,
}

/// Plain tabular Q-learner with scheduled step size and exploration.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub table: QTable,
    pub schedules: Schedules,
    pub hysteretic: Option<HystereticRates>,
}

impl QLearner {
    pub fn new(table: QTable, schedules: Schedules) -> Self {
        Self {
            table,
            schedules,
            hysteretic: None,
        }
    }

    pub fn hysteretic(mut self, rates: HystereticRates) -> Self {
        self.hysteretic = Some(rates);
        self
    }

    pub fn act<R: Rng + ?Sized>(&self, s: StateId, t: u64, rng: &mut R) -> Result<ActionId> {
        epsilon_greedy(&self.table, s, self.schedules.exploration.at(t), rng)
    }

    pub fn learn(&mut self, sample: &Sample, t: u64) -> Result<f64> {
        let alpha = self.schedules.learning_rate.at(t);
        match self.hysteretic {
            None => q_update(&mut self.table, sample, alpha),
            Some(rates) => {
                let target = sample.cost + self.table.gamma() * self.table.min_value(sample.next_state);
                let td = target - self.table.get(sample.state, sample.action);
                let step = if td < 0.0 { alpha } else { alpha * rates.slow_ratio };
                self.table.blend_toward(sample.state, sample.action, target, step)
            }
        }
    }
}
