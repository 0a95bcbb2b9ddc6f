//! Scenario files, the end-to-end pipeline and its outputs.
//!
//! A run goes: per operator, solve the transmit power for its coverage
//! target, roll it up into network energy demand, then allocate supplier
//! energy with the configured fairness. Sweeps repeat this for each value of
//! one parameter.

mod config;
mod output;
mod pipeline;
mod plot;

pub use config::{
    load_config, load_config_with, parse_config, profile_config, McSettings, Overrides, Profile, ScenarioConfig,
    SolverSettings, Sweep,
};
pub use output::{emit_outputs, results_header, results_values, Manifest};
pub use pipeline::{run_pipeline, OperatorResult, PointStatus, SweepResult};
