//! Library side of the `fkoc` command: configuration, CSV/JSON plumbing and
//! the subcommands, kept here so integration tests can drive them directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
