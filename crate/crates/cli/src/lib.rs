//! Configuration parsing and experiment execution behind the `ringclock`
//! binary.

pub mod error;
pub mod output;
pub mod run;
pub mod runspec;

pub use error::CliError;
pub use run::{execute, RunSummary, METADATA_FILE};
pub use runspec::{load_runspec, parse_runspec, Kind, RunSpec};
