//! Library side of the `mfmpe` command: configuration, solution files and
//! the `solve`, `verify` and `simulate` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod tables;

pub use commands::{
    cmd_simulate, cmd_solve, cmd_verify, load_solution, monotonicity_warnings, SimulateArgs, SimulateSummary,
    SolveOutcome, SolveReport, StoredSolution, VerifyReport,
};
pub use config::{load_config, Config, Family};
pub use error::{CliError, Result};
