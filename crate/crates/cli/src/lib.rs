//! Command-line shell around `swipt-core`: configuration, run artifacts and
//! plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod plot;

pub use error::CliError;
