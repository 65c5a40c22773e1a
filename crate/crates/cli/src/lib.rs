//! Library side of the `ibfd` binary: config handling and the four commands.

pub mod commands;
pub mod config;
