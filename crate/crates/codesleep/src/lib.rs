//! Experiment runner for the codesleep simulator: scenario files, repeated
//! runs and flow sweeps, CSV output and the `codesleep` command.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod output;

pub use config::{load_config, parse_config, render_config, LoadError};
pub use experiment::{run_experiment, AggregateRow, Experiment, Plan, RunRow};
