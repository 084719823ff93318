//! The grid wireless network: geometry, random-walk mobility, ARSS physics
//! with quantization, local state/action codecs, the three-term cost and the
//! exact enumeration oracles.

mod codec;
mod config;
mod enumerate;
mod geometry;
mod network;
mod physics;

pub use codec::{ActionCodec, AgentAction, AgentState, JointCodec, StateCodec};
pub use config::{BaseStationSpec, WirelessConfig};
pub use enumerate::{enumerate_agent_mdp, enumerate_joint_mdp, AgentMdp, JointMdp, JOINT_STATE_CAP, LEVEL_EPS, OTHER_CONFIG_CAP};
pub use geometry::{BaseStation, BsLayout, GridGeometry, Move, Position};
pub use network::{NetworkState, StepOutcome, WirelessNetwork};
pub use physics::{q_function, true_arss, ArssLevels, ArssNoise, CostModel, Regime, INVALID_COST, SNR_DENOMINATOR_FLOOR};
