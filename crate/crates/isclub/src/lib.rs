//! Information-sharing-club modeling: an analytic equilibrium engine over
//! typed supply/demand distributions, plus a seeded stochastic membership
//! simulator.
//!
//! - [`domain`]: type distributions, peer profiles, populations and the
//!   supply/demand aggregation algebra.
//! - [`scenarios`]: truncated Zipf generators, rank-shift mismatch and
//!   popularity-rank demand conversion.
//! - [`analytics`]: success rates, the growth threshold, fixed points,
//!   bifurcations, and sweep tables.
//! - [`simulator`]: agent-based synchronous-round simulation and ensembles.

pub mod analytics;
pub mod domain;
pub mod error;
pub mod scenarios;
pub mod simulator;

#[cfg(test)]
pub(crate) mod testdata;

pub use error::{Error, Result};

/// Formats a float with 10 significant digits (scientific notation, `.`
/// decimal separator) for byte-stable CSV output.
pub fn sig10(value: f64) -> String {
    format!("{value:.9e}")
}
