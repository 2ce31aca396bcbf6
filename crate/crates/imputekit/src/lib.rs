//! File formats, configuration, the experiment runner and the command-line
//! front end for [`imputekit_core`].
//!
//! - [`csv_io`]: data matrices as CSV with an `NA` token.
//! - [`spec_file`]: JSON imputation and analysis models that name columns.
//! - [`report`]: trace, Q-Q and summary files, and two-sample diagnostics.
//! - [`impute`]: multiple imputation of a user dataset to files.
//! - [`experiment`]: the simulation studies as reproducible runs.

pub mod csv_io;
mod error;
pub mod experiment;
pub mod impute;
pub mod report;
pub mod spec_file;

pub use error::{Error, Result};
pub use imputekit_core as core;
