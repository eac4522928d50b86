//! Shallow ReLU network training by search over activation regions.
//!
//! For a fixed activation pattern the training loss is convex in the first
//! layer weights, so empirical risk minimization splits into one convex
//! problem per feasible pattern. This crate enumerates those patterns, solves
//! the per-region problems, and provides exact and heuristic searches over
//! them alongside a gradient descent baseline.

pub mod analysis;
pub mod arrangement;
pub mod data;
pub mod error;
pub mod ingest;
pub mod network;
pub mod rng;
pub mod search;
pub mod solver;

pub use arrangement::{ActivationPattern, ChamberSet};
pub use data::Dataset;
pub use error::{Error, Result};
pub use network::{LossKind, ShallowReluNet};
