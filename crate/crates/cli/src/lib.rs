//! Configuration parsing and experiment pipelines behind the `spatial-lrd`
//! command.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{load_config, parse_config, ExperimentConfig, RunConfig};
pub use error::{CliError, ErrorReport};
pub use pipeline::{Command, Outcome, Run};
