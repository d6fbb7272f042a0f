//! File formats, parallel evaluation and the command-line front end around
//! [`hdfa_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod metrics;
pub mod parallel;

pub use error::{CliError, Result, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
