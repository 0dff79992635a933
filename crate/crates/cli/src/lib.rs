//! Command-line front end: file formats and subcommands.

pub mod app;
pub mod io;
