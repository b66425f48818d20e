//! Command line, configuration files and run output.

pub mod cli;
pub mod config;
pub mod output;

pub use cli::run_cli;
pub use config::{parse_config, parse_config_str, ConfigError, ConfigErrors, RunConfig};
