//! Configuration, sweep execution, CSV output and the command-line front end.

pub mod cli;
pub mod compare;
pub mod config;
pub mod gen_data;
pub mod output;
pub mod problem;
pub mod runner;

pub use config::{BaselineBudget, BetaMode, Coupling, ExperimentConfig, Method, NoiseLevel};
pub use runner::{run_experiment, RunKey, RunOutcome};
