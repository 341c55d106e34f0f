//! Active learning of probabilistic capability models for black-box agents.

pub mod abstraction;
pub mod bits;
pub mod capability_model;
pub mod cli;
pub mod dataset;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod learner;
pub mod model_io;
pub mod query_engine;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Probability;

/// f64 is the default precision; the `32` aliases trade accuracy for memory.
pub type Model = capability_model::CapabilityModel<f64>;
pub type Model32 = capability_model::CapabilityModel<f32>;
pub type Distribution = query_engine::StateDistribution<f64>;
pub type Distribution32 = query_engine::StateDistribution<f32>;
