//! Scenario-driven commands behind the `hyperstab` binary.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::{
    cache_dir, cmd_simulate, cmd_sweep, cmd_synthesize, cmd_validate, exit_code, Outcome, EXIT_CONFIG, EXIT_DIVERGED,
    EXIT_FAILED, EXIT_OK,
};
pub use config::{Scenario, ScenarioConfig, SCENARIO_SCHEMA};
