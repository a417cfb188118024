//! Library side of the `smcvar` command-line tool.

pub mod commands;
pub mod config;
pub mod experiment;
