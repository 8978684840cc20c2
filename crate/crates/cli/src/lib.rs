//! Config-driven batch runner for the qsd-core experiments.
//!
//! A run is one TOML file: [`config::parse_config`] validates it into a
//! [`config::RunConfig`], and [`run::run`] executes the named experiment and
//! writes CSV/JSON artifacts plus a `manifest.json` into `output_dir`.

pub mod config;
pub mod run;

pub use config::{
    parse_config, parse_config_str, parse_operator_entries, parse_state_entries, ConfigError, Issue, RunConfig,
};
pub use run::{run, RunError, RunSummary};
