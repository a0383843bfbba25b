//! Simulation and analysis toolkit for distributed online convex optimization
//! with randomly available agents.
//!
//! The pieces, bottom-up:
//!
//! - [`graph`]: communication graphs and Laplacian spectra.
//! - [`activation`]: random active agents and surviving edges per round.
//! - [`gossip`]: gossip matrices and the mixing rate `rho`.
//! - [`environment`]: local loss generators.
//! - [`learners`]: gossip FTRL, its known-`|S_t|` variant, and distributed OGD.
//! - [`simulation`]: the round loop producing traces.
//! - [`regret`]: network regret, comparator, theory bounds, decomposition.
//! - [`harness`]: configs, experiments, sweeps and CSV output.

pub mod activation;
pub mod environment;
pub mod error;
pub mod gossip;
pub mod graph;
pub mod harness;
pub mod learners;
pub mod regret;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
