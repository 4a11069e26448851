//! File formats and the `rlcov` command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{execute, Command};
pub use config::{RawConfig, RunConfig};
pub use error::{CliError, CliResult};
