//! Branching processes in a random environment with immigration (BPIRE),
//! geometric offspring, and Monte Carlo tools for the clan-survival
//! probabilities of the process conditioned to die at generation `n`.

pub mod asymptotics;
pub mod conditioned;
pub mod env;
pub mod error;
pub mod gfalgebra;
pub mod numerics;
pub mod popsim;
pub mod rng;
pub mod walk;

pub use error::{Error, Result};
