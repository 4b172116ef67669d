//! Monte Carlo estimators for the scaling of clan-survival probabilities.

pub mod engine;
pub mod segment;
pub mod estimators;
pub mod series;
pub mod fit;
pub mod windows;
pub mod checks;
pub mod io;
