//! Configuration, experiment runners, CSV output and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod table;

pub use cli::cli_dispatch;
pub use config::{parse_config, parse_config_for, ExperimentConfig, EXPERIMENTS};
pub use experiments::{run_experiment, ExperimentOutput};
pub use table::{mean_stderr, Cell, CsvTable};
