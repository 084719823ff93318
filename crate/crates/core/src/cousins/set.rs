use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::weights::{ensemble_value, update_weights, TdStatistic};
use super::{EstimatedKernel, ReplayBuffer};
use crate::error::{Error, Result};
use crate::mdp::{epsilon_greedy, q_update, ActionId, ActionMask, FiniteMdp, QTable, Sample, Schedules, StateId};
use crate::rng::StreamRng;

/// Cost charged for a synthetic transition. Cousins share the real cost
/// model and differ only in their kernels.
pub trait SyntheticCost {
    fn synthetic_cost(&self, s: StateId, a: ActionId, next: StateId) -> f64;
}

impl SyntheticCost for FiniteMdp {
    fn synthetic_cost(&self, s: StateId, a: ActionId, _next: StateId) -> f64 {
        self.cost(s, a)
    }
}

/// Where each synthetic environment takes its `(s, a)` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticStart {
    /// Each cousin walks its own trajectory, choosing actions epsilon-greedily
    /// on its own table.
    #[default]
    Trajectory,
    /// A uniformly drawn replay-buffer pair.
    Replay,
}

/// Which TD errors feed the per-environment weighting statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightSignal {
    /// Each environment's own update errors (synthetic ones for cousins).
    #[default]
    OwnEnvironment,
    /// Every table's TD error on the real transition.
    RealTransition,
}

/// Where the ensemble fusion is applied each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionScope {
    #[default]
    RealPair,
    /// The real pair plus every synthetic pair updated this iteration.
    Touched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemqConfig {
    /// Kernel powers; must contain 1 (the real environment).
    pub orders: Vec<u32>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Iterations between recomputations of the kernel powers.
    pub refresh_interval: u64,
    pub td_decay: f64,
    pub weight_eps: f64,
    /// Tables start i.i.d. uniform in `[0, init_scale]`, identical across
    /// environments.
    pub init_scale: f64,
    pub synthetic_per_order: usize,
    pub synthetic_start: SyntheticStart,
    pub weight_signal: WeightSignal,
    pub fusion: FusionScope,
}

impl Default for MemqConfig {
    fn default() -> Self {
        Self {
            orders: vec![1, 2],
            buffer_capacity: 10_000,
            batch_size: 32,
            refresh_interval: 50,
            td_decay: super::TD_EMA_DECAY,
            weight_eps: super::WEIGHT_EPS,
            init_scale: 0.01,
            synthetic_per_order: 1,
            synthetic_start: SyntheticStart::default(),
            weight_signal: WeightSignal::default(),
            fusion: FusionScope::default(),
        }
    }
}

impl MemqConfig {
    pub fn with_orders(mut self, orders: Vec<u32>) -> Self {
        self.orders = orders;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.orders.contains(&1) {
            return Err(Error::Config("cousin orders must include 1 (the real environment)".into()));
        }
        let mut sorted = self.orders.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.orders.len() || sorted[0] == 0 {
            return Err(Error::Config("cousin orders must be distinct and positive".into()));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.refresh_interval == 0 {
            return Err(Error::Config("buffer capacity, batch size and refresh interval must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.td_decay) || self.weight_eps <= 0.0 || self.init_scale < 0.0 {
            return Err(Error::Config("invalid td decay, weight eps or init scale".into()));
        }
        Ok(())
    }
}

/// One agent's real environment plus its digital cousins: an estimated
/// kernel, one Q-table per kernel power and the fused ensemble table.
#[derive(Debug, Clone)]
pub struct CousinSet {
    config: MemqConfig,
    /// Orders with 1 first, then the cousins in configured order.
    orders: Vec<u32>,
    tables: Vec<QTable>,
    ensemble: QTable,
    weights: Vec<f64>,
    td: Vec<TdStatistic>,
    kernel: EstimatedKernel,
    buffer: ReplayBuffer,
    cursors: Vec<Option<StateId>>,
    schedules: Schedules,
    rng: StreamRng,
    iterations: u64,
    touched: Vec<(StateId, ActionId)>,
}

impl CousinSet {
    /// `init` draws the shared initial table; `model_rng` drives replay
    /// sampling and synthetic transitions.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        mask: Option<Arc<ActionMask>>,
        config: MemqConfig,
        schedules: Schedules,
        init: &mut R,
        model_rng: StreamRng,
    ) -> Result<Self> {
        config.validate()?;
        schedules.validate()?;
        let mut base = QTable::random(n_states, n_actions, gamma, config.init_scale, init)?;
        if let Some(mask) = mask {
            base = base.with_mask(mask)?;
        }
        let mut orders = vec![1];
        orders.extend(config.orders.iter().copied().filter(|&n| n != 1));
        let k = orders.len();
        Ok(Self {
            tables: vec![base.clone(); k],
            ensemble: base,
            weights: vec![1.0 / k as f64; k],
            td: vec![TdStatistic::new(config.td_decay); k],
            kernel: EstimatedKernel::new(n_states, n_actions),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            cursors: vec![None; k],
            orders,
            config,
            schedules,
            rng: model_rng,
            iterations: 0,
            touched: Vec::new(),
        })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn config(&self) -> &MemqConfig {
        &self.config
    }

    pub fn schedules(&self) -> &Schedules {
        &self.schedules
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn td_means(&self) -> Vec<f64> {
        self.td.iter().map(|s| s.mean_abs).collect()
    }

    /// Q-table of the `k`-th environment (0 is the real one).
    pub fn table(&self, k: usize) -> &QTable {
        &self.tables[k]
    }

    pub fn tables(&self) -> &[QTable] {
        &self.tables
    }

    pub fn ensemble(&self) -> &QTable {
        &self.ensemble
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn kernel(&self) -> &EstimatedKernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut EstimatedKernel {
        &mut self.kernel
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Epsilon-greedy action on the ensemble table.
    pub fn act<R: Rng + ?Sized>(&self, s: StateId, t: u64, rng: &mut R) -> Result<ActionId> {
        epsilon_greedy(&self.ensemble, s, self.schedules.exploration.at(t), rng)
    }

    /// Stores a real transition, re-estimates the kernel from one replay
    /// mini-batch and refreshes the powers on schedule.
    pub fn record(&mut self, sample: Sample) -> Result<()> {
        if sample.state >= self.kernel.n_states() || sample.next_state >= self.kernel.n_states() {
            return Err(Error::index(
                "state",
                sample.state.max(sample.next_state),
                self.kernel.n_states(),
            ));
        }
        self.buffer.push(sample);
        for _ in 0..self.config.batch_size {
            let drawn = *self.buffer.sample(&mut self.rng).expect("buffer holds the sample just pushed");
            self.kernel.record(&drawn)?;
        }
        if self.iterations.is_multiple_of(self.config.refresh_interval) {
            self.kernel.refresh();
        }
        self.iterations += 1;
        Ok(())
    }

    /// Draws one transition of the order-`n` cousin from `(s, a)`.
    pub fn synthetic_step(&mut self, order: u32, s: StateId, a: ActionId, cost: &dyn SyntheticCost) -> Sample {
        let next = self.kernel.sample_next(order, s, a, &mut self.rng);
        Sample::new(s, a, next, cost.synthetic_cost(s, a, next))
    }

    /// Local learning step for an uncoordinated transition: the real table
    /// learns from `sample`, every cousin learns from its own synthetic
    /// draws, weights are refreshed and the ensemble is fused.
    pub fn learn(&mut self, sample: &Sample, t: u64, cost: &dyn SyntheticCost) -> Result<()> {
        let alpha = self.schedules.learning_rate.at(t);
        let zeta = self.schedules.exploration.at(t);
        self.touched.clear();
        let real_td: Vec<f64> = match self.config.weight_signal {
            WeightSignal::RealTransition => self.tables.iter().map(|q| td_error(q, sample)).collect(),
            WeightSignal::OwnEnvironment => Vec::new(),
        };
        let td1 = q_update(&mut self.tables[0], sample, alpha)?;
        match self.config.weight_signal {
            WeightSignal::OwnEnvironment => self.td[0].observe(td1),
            WeightSignal::RealTransition => {
                for (stat, td) in self.td.iter_mut().zip(&real_td) {
                    stat.observe(*td);
                }
            }
        }
        for k in 1..self.orders.len() {
            for _ in 0..self.config.synthetic_per_order {
                let (s, a) = self.synthetic_pair(k, sample, zeta)?;
                let synth = self.synthetic_step(self.orders[k], s, a, cost);
                let td = q_update(&mut self.tables[k], &synth, alpha)?;
                if self.config.weight_signal == WeightSignal::OwnEnvironment {
                    self.td[k].observe(td);
                }
                self.cursors[k] = Some(synth.next_state);
                self.touched.push((s, a));
            }
        }
        self.refresh_weights()?;
        self.fuse(sample.state, sample.action, t);
        if self.config.fusion == FusionScope::Touched {
            let touched = std::mem::take(&mut self.touched);
            for &(s, a) in &touched {
                self.fuse(s, a, t);
            }
            self.touched = touched;
        }
        Ok(())
    }

    /// Moves every environment's `Q(s, a)` toward a shared external target
    /// and fuses the ensemble there.
    pub fn learn_toward(&mut self, s: StateId, a: ActionId, target: f64, t: u64) -> Result<()> {
        let alpha = self.schedules.learning_rate.at(t);
        for (table, stat) in self.tables.iter_mut().zip(&mut self.td) {
            let td = table.blend_toward(s, a, target, alpha)?;
            stat.observe(td);
        }
        self.refresh_weights()?;
        self.fuse(s, a, t);
        Ok(())
    }

    /// One full iteration on a given real transition.
    pub fn memq_iteration(&mut self, sample: Sample, t: u64, cost: &dyn SyntheticCost) -> Result<()> {
        self.record(sample)?;
        self.learn(&sample, t, cost)
    }

    /// Ensemble fusion at `(s, a)` with the update ratio at `t`.
    pub fn fuse(&mut self, s: StateId, a: ActionId, t: u64) {
        let u = self.schedules.update_ratio.at(t);
        let values: Vec<f64> = self.tables.iter().map(|q| q.get(s, a)).collect();
        let v = ensemble_value(self.ensemble.get(s, a), u, &self.weights, &values);
        self.ensemble.set(s, a, v);
    }

    fn refresh_weights(&mut self) -> Result<()> {
        let means = self.td_means();
        self.weights = update_weights(&means, self.config.weight_eps)?;
        Ok(())
    }

    fn synthetic_pair(&mut self, k: usize, real: &Sample, zeta: f64) -> Result<(StateId, ActionId)> {
        match self.config.synthetic_start {
            SyntheticStart::Trajectory => {
                let s = self.cursors[k].unwrap_or(real.state);
                let a = epsilon_greedy(&self.tables[k], s, zeta, &mut self.rng)?;
                Ok((s, a))
            }
            SyntheticStart::Replay => {
                let drawn = self.buffer.sample(&mut self.rng).copied().unwrap_or(*real);
                Ok((drawn.state, drawn.action))
            }
        }
    }
}

fn td_error(q: &QTable, sample: &Sample) -> f64 {
    sample.cost + q.gamma() * q.min_value(sample.next_state) - q.get(sample.state, sample.action)
}
