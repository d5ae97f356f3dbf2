//! Expected-time trajectory optimization under initial-state uncertainty.
//!
//! A set of sampled initial states ("particles") is optimized jointly: all
//! particles share one control sequence for the first steps (the consensus
//! horizon) and then steer independently. Reaching the destination quickly is
//! encouraged with a weighted sum of state norms, solved as a second-order
//! cone program for linear models or by sequential convex programming for the
//! Dubins car.

pub mod config;
pub mod conic;
pub mod dubins;
pub mod error;
pub mod harness;
pub mod models;
pub mod par;
pub mod scp;
pub mod soncost;
pub mod stochastic;
pub mod transcription;

pub use error::{Error, Result};
pub use models::{Control, DynamicsModel, State};
pub use scp::TrajectorySolution;
pub use soncost::{WeightKind, WeightSequence};
pub use stochastic::{GaussianSpec, ParticleEnsemble};
pub use transcription::SolveConfig;
pub use config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
