//! Data-parallel differentiable car-following simulation.
//!
//! The crate is organized around a pure acceleration kernel ([`idm`]), a
//! multi-vehicle rollout engine with a hand-derived backward pass ([`sim`]),
//! a projected Adam optimizer over driver parameters and virtual-leader
//! sequences ([`optim`]), and the tasks built on top of them: trajectory
//! filtering and reconstruction ([`tasks`]), classical smoothing baselines
//! ([`baselines`]), evaluation metrics ([`metrics`]), and lane-projected
//! trajectory forecasting ([`predict`]). [`synth`] generates the synthetic
//! worlds and corpora used by tests and benchmarks.
//!
//! With the default `parallel` feature the per-vehicle and per-trajectory
//! loops run on rayon; without it everything runs sequentially. Results are
//! bit-identical either way and for any worker count.

pub mod baselines;
pub mod error;
pub mod idm;
pub mod metrics;
pub mod optim;
mod par;
pub mod predict;
pub mod sim;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
pub use idm::{IdmGradient, IdmInput, IdmParams};
pub use sim::{TrajectoryBuffer, WorldState};
