//! Adaptive model-predictive Ising control of traffic signals, with a
//! mesoscopic link-queue simulator to drive it.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: road graph, signal groups and bias weights
//! - [`mesosim`]: second-by-second traffic simulation and metrics
//! - [`flowstats`]: online outflow/inflow estimates
//! - [`ising`]: linear bias model and its compilation to an Ising instance
//! - [`solvers`]: exact, greedy and annealing minimizers
//! - [`control`]: the predictive controller and baseline policies
//! - [`harness`]: experiments, sweeps, CSV output and the coupling protocol

pub mod control;
pub mod error;
pub mod flowstats;
pub mod harness;
pub mod ising;
pub mod mesosim;
pub mod network;
pub mod solvers;

pub use error::{Error, Result};
pub use network::{generate_lattice, RoadNetwork};
