//! Command-line front end: configuration, report writing and the three
//! subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
