//! Batch front end: parse a run config, build the model and write CSV
//! reports for one command.

pub mod config;
pub mod run;

pub use config::{parse_config, render, RunConfig, SchemaError};
pub use run::{execute, run, Outcome, Overrides, RunError};
