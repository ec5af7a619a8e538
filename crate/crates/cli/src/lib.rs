//! Scenario runner behind the `magswarm` binary.
//!
//! Each scenario reads a [`ScenarioConfig`], runs headless and returns its
//! artifacts in memory; [`Artifacts::commit`] writes them once the run
//! has succeeded.

pub mod artifacts;
pub mod config;
mod error;
pub mod scenarios;

pub use artifacts::Artifacts;
pub use config::ScenarioConfig;
pub use error::CliError;
pub use scenarios::{run, session_config, Report, Scenario};
