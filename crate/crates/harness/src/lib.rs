//! Command-line experiments on the Dyson-Jacobi system: verification
//! suites, mixing curves, cutoff scans and their plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
#[cfg(feature = "matrix-oracle")]
pub mod oracle;
pub mod output;
pub mod plot;
pub mod tmix;
pub mod verify;

pub use config::Config;
pub use error::{HarnessError, Result};
