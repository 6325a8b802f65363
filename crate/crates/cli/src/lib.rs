//! Library side of the `spext` command line: configuration, execution and
//! output tables.

pub mod commands;
pub mod config;
pub mod table;

pub use commands::{run, Outcome};
pub use config::{Command, ExperimentConfig};
pub use table::{Format, Table};
