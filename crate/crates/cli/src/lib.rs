//! Command-line front end: definition files, solver pipeline, exports.

pub mod commands;
pub mod definition;
pub mod error;

pub use commands::{run, Cli};
pub use error::CliError;
