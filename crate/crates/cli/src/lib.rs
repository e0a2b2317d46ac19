//! Config loading, solver orchestration and CSV/JSON export behind the `pdmp` binary.

pub mod config;
pub mod error;
pub mod export;
pub mod run;

pub use config::{Config, Format, Resolved, Slice};
pub use error::CliError;
pub use run::{run, Cli, Command};
