//! Command-line front end for the regularized MPC core: TOML scenario files,
//! assumption checks, closed-loop runs and CSV reports.

pub mod checks;
pub mod commands;
pub mod error;
pub mod number;
pub mod output;
pub mod scenario_file;

pub use commands::{execute, Cli};
pub use error::{exit, CliError, CliResult};
