//! Configuration-driven runs behind the command-line tool.

pub mod config;
pub mod output;
pub mod runner;
pub mod verify;

pub(crate) use config::num;
pub use config::{ExperimentConfig, Mode, ObservablesDecl};
pub use runner::{run, RunOutcome};
pub use verify::{evaluate, VerifyReport};
