//! Iterative (chained-equations) multiple imputation and joint Bayesian
//! Gaussian imputation, run as two comparable Markov chains.
//!
//! The crate is `no_std` and needs only an allocator. Everything here is a
//! pure function of its inputs and an [`RngStream`]: replaying a stream
//! replays every draw bit for bit. File formats, configuration and the
//! command-line runner live in the `imputekit` companion crate.
//!
//! Module map:
//!
//! - [`data`]: the incomplete data matrix, missingness masks and patterns.
//! - [`rng`]: seeded, label-addressed random streams and the samplers the
//!   chains need (multivariate normal, scaled inverse chi-square,
//!   inverse-Wishart, Bernoulli).
//! - [`condmodels`]: per-variable linear/logistic conditional models, their
//!   posterior draws and predictive imputations.
//! - [`jointgauss`]: the joint Gaussian comparator (data augmentation,
//!   bivariate per-variable Gibbs scheme, compatibility maps, EM).
//! - [`chains`]: chain state, sweeps, burn-in/thinning drivers and traces.
//! - [`diagnostics`]: KS, Q-Q, binned total variation, R-hat and the
//!   prior-sensitivity experiment.
//! - [`combine`]: Rubin's rules, stacked and averaged estimators.
//! - [`sim`]: data generators for the three simulation studies.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chains;
pub mod combine;
pub mod condmodels;
pub mod data;
pub mod diagnostics;
mod error;
pub mod jointgauss;
pub mod linalg;
mod math;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use rng::RngStream;
