//! File formats, the scenario runner and the command line for the
//! `mhqn-core` network simulator.

pub mod harness;
pub mod io;
mod locate;
pub mod scenario;

pub use harness::{run, run_file, RunOutput, RunReport};
pub use scenario::{load, validate_files, Diagnostic, LoadedScenario, Scenario};
