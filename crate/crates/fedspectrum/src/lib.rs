//! A deterministic, seedable simulator of federated multi-agent
//! reinforcement learning for dynamic spectrum access.
//!
//! N secondary-user pairs share M radio channels under an exogenous
//! primary-user occupancy process. Each pair learns a recurrent
//! channel-access policy locally by policy gradient; a central server
//! periodically aggregates the policies (FedAvg) with optional partial
//! participation, stochastic quantization of uploads, and deep-Q client
//! selection.
//!
//! The crate is organized along the system's seams:
//!
//! - [`env`] — topology, pathloss, SINR, capacity rewards, PU occupancy
//! - [`policy`] — the recurrent softmax policy and its REINFORCE gradients
//! - [`agent`] — episodes, buffers, and local updates
//! - [`fed`] — aggregation, quantization, and the communication round
//! - [`selector`] — deep-Q participant selection from weight features
//! - [`baselines`] — distributed-learning and random-policy references
//! - [`config`], [`metrics`], [`experiment`] — the runner: key=value
//!   configs, CSV metrics, seeded multi-run orchestration
//!
//! Every random draw comes from a stream named by (seed, component), so a
//! `(config, seed)` pair fixes an entire experiment byte for byte. See the
//! guide under `book/` for a narrative walkthrough.

pub mod agent;
pub mod baselines;
pub mod config;
pub mod env;
mod error;
pub mod experiment;
pub mod fed;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod selector;

pub use error::{Error, Result};
