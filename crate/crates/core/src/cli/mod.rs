//! Configuration and experiment orchestration used by the `diffbc` binary.

mod commands;
mod config;

pub use commands::*;
pub use config::{all_keys, Environment, Method, RunConfig};
