//! Configuration, orchestration and file formats for the `stab` tool.
//!
//! * [`config`]: the JSON run configuration and its validation.
//! * [`run`]: executes a configuration and writes artifacts.
//! * [`emit`]: trajectory and synthesis-table CSV.
//! * [`examples`]: built-in configurations for the planar worked examples.

pub mod config;
pub mod emit;
pub mod examples;
pub mod run;

pub use config::{ConfigError, RunConfig};
pub use examples::builtin_example;
pub use run::{execute, Hooks, Overrides, RunOutcome};
