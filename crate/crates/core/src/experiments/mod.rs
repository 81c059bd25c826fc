//! Scenario drivers behind the command-line verbs.

pub mod calibrate;
pub mod config;
pub mod fit;
pub mod plan;
pub mod report;
pub mod sweeps;

pub use config::ExperimentConfig;
pub use fit::{fit_parameters, FittedParameters};
pub use plan::{Channel, ChannelPlan};
pub use sweeps::{longrun, sweep_channel, sweep_ob, sweep_reach};
