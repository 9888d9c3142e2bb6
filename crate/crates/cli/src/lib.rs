//! Configuration parsing and subcommand dispatch for the `mvsde` binary.

pub mod config;
pub mod run;
