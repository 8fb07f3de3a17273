//! Policy sweeps, result files and the command-line driver for the kinetic
//! welfare model. The numerics live in `kinetic-welfare-core`.

pub mod cli;
mod error;
pub mod experiments;
pub mod output;

pub use error::{ExitCode, SimError};
