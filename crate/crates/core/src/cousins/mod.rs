//! Single-agent multi-environment mixed Q-learning: a replay buffer feeds an
//! online kernel estimate, synthetic environments run on powers of that
//! estimate, and the per-environment Q-tables are fused into an ensemble.

mod buffer;
mod kernel;
mod set;
mod weights;

pub use buffer::ReplayBuffer;
pub use kernel::{matrix_power_kernel, EstimatedKernel};
pub use set::{CousinSet, FusionScope, MemqConfig, SyntheticCost, SyntheticStart, WeightSignal};
pub use weights::{ensemble_value, update_weights, TdStatistic, TD_EMA_DECAY, WEIGHT_EPS};
