//! Experiment harness for Bayesian active RL: the query loop and its
//! baselines, run logs, summary tables, SVG plots and the `barl` CLI.

pub mod cli;
pub mod config;
pub mod exec;
pub mod experiment;
pub mod logs;
pub mod plot;
pub mod table;

pub use config::{parse_experiment, parse_run, ConfigError, ExperimentConfig, RunConfig, Strategy};
pub use exec::PoolExecutor;
pub use experiment::{evaluate_policy, run, solved_threshold, RunError, RunLog, Threshold};
