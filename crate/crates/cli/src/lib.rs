//! Command-line driver: configuration, checkpoints, manifests and the
//! subcommands behind the `sdegan` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use checkpoint::Checkpoint;
pub use commands::{run, run_command, Cli, Command, Context, GlobalArgs};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::{CliError, CliResult};
