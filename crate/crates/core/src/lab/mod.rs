//! Experiment configuration, run directories and command execution shared
//! by the `gasket-lab` binary and the Python bindings.

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

pub use commands::{run, Outcome};
pub use config::{Command, ExperimentConfig};
