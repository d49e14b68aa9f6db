//! Command-line front end: configuration loading and the subcommands.

pub mod commands;
pub mod config;
