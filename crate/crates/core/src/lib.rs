//! Monte Carlo toolkit for the meta-game of Q-learning hyperparameter choice
//! in a repeated Bertrand duopoly.

pub mod detection;
pub mod env;
pub mod error;
pub mod metagame;
pub mod qlearning;
pub mod rng;
pub mod simulation;
pub mod sweep;

pub use error::{Error, Result};

/// Crate version, embedded in every written artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
