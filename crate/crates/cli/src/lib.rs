//! Command-line front end for `ensrlab`: dependence measures, privacy curves and
//! the verification suites, written as CSV or JSON.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod suites;

pub use cli::{run, Cli};
pub use config::{OutputFormat, RunConfig};
pub use error::{CliError, CliResult};
