//! Configuration, scenario runners, sweeps and convergence checks for the
//! `qpiston` command-line tool.

pub mod config;
pub mod convergence;
pub mod error;
pub mod output;
pub mod plot;
pub mod scenarios;

pub use config::{load_config, parse_config, LoadedConfig, Overrides, RunSetup};
pub use error::{HarnessError, Result};
pub use scenarios::{run_scenario, ScenarioName, ScenarioSpec};
