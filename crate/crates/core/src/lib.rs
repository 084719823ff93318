//! Partially decentralized multi-agent multi-environment mixed Q-learning
//! (M-MEMQ) on a grid wireless network.
//!
//! The crate is organized bottom-up:
//!
//! - [`mdp`]: tabular primitives and exact oracles.
//! - [`wireless`]: the grid network, ARSS physics, codecs and the cost model.
//! - [`cousins`]: single-agent multi-environment learning over synthetic
//!   environments built from powers of the estimated transition kernel.
//! - [`coordination`]: coordinated/uncoordinated classification, Bayesian
//!   joint-state estimation, the leader protocol and the four-case update
//!   dispatch.
//! - [`bounds`]: closed-form variance, convergence and misdetection bounds.
//! - [`experiment`]: runners, baselines, metrics, sweeps and the acceptance
//!   suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coordination;
pub mod cousins;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod rng;
pub mod wireless;

pub use error::{Error, Result};
