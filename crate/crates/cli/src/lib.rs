//! Command-line front end: INI configuration, command dispatch and
//! deterministic JSON/CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;
pub mod error;
pub mod output;
mod verify;

pub use commands::{run, Cli, Command, Dir, Problem};
pub use verify::{run_checks, Check};
