//! Batch front end: TOML configs, the four-run protocol, sweeps, analysis
//! of written tables and the seed-check suite.

pub mod analyze;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod protocol;
pub mod selfcheck;
pub mod table;

pub use error::{CliError, CliResult};
