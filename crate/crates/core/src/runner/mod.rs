//! Config-driven experiment runner used by the `xychain` binary.

pub mod config;
pub mod experiments;
pub mod manifest;

pub use config::{validate_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::{error_exit_code, run_experiment, run_rg, RunOutcome, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO, EXIT_NUMERICAL, EXIT_OK};
pub use manifest::{RunManifest, RunStatus};
