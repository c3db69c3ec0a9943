//! Experiment harness for `dcs-core`: TOML configs, figure presets,
//! parallel sweeps, CSV/manifest output and per-preset verification.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;
pub mod verify;

pub use config::{load_config, resolve, ExperimentConfig, ResolvedConfig};
pub use error::{ExperimentError, Result};
pub use runner::{run, RunOutput, Table};
pub use verify::{verify, Report};
